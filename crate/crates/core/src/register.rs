//! Registration backends: closed-form Kabsch alignment, point-to-point ICP,
//! a feature-space inverse-compositional Lucas-Kanade registrar, and the
//! mask-then-register composition.
//!
//! Every registrar returns the transform that maps the source onto the
//! template.

use nalgebra::{DMatrix, DVector, Vector6, SVD};
use thiserror::Error;

use crate::encoder::{EncoderError, EncoderParams};
use crate::geom::{
    apply_transform, se3_exp, se3_log, KdTree, Mat3, PointCloud, RigidTransform, Twist, Vec3,
};
use crate::masknet::{apply_mask, MaskError, MaskNetParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegisterError {
    #[error("degenerate point configuration (cross-covariance rank < 2)")]
    Degenerate,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("point clouds differ in size ({0} vs {1})")]
    CountMismatch(usize, usize),
    #[error("feature Jacobian is singular (condition number {0:e})")]
    SingularJacobian(f64),
    #[error("encoder: {0}")]
    Encoder(#[from] EncoderError),
}

/// Outcome of an iterative registration.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    /// Source-to-template transform.
    pub transform: RigidTransform,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Residual measured before each iteration's update, then the final one.
    pub residual_history: Vec<f64>,
}

/// Anything that can align a source cloud onto a template cloud.
pub trait Registrar {
    fn register(&self, source: &PointCloud, template: &PointCloud) -> Result<RegistrationResult, RegisterError>;

    fn name(&self) -> &'static str;
}

/// Least-squares rigid transform `T` minimizing `sum |T(a_i) - b_i|^2` for
/// row-aligned point lists.
pub fn kabsch(a: &[Vec3], b: &[Vec3]) -> Result<RigidTransform, RegisterError> {
    if a.len() != b.len() {
        return Err(RegisterError::CountMismatch(a.len(), b.len()));
    }
    if a.len() < 3 {
        return Err(RegisterError::TooFewPoints {
            needed: 3,
            got: a.len(),
        });
    }
    let n = a.len() as f64;
    let ca = a.iter().fold(Vec3::zeros(), |s, p| s + p) / n;
    let cb = b.iter().fold(Vec3::zeros(), |s, p| s + p) / n;
    let mut h = Mat3::zeros();
    for (p, q) in a.iter().zip(b) {
        h += (p - ca) * (q - cb).transpose();
    }
    let svd = h.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    if !(sv[0] > 0.0) || sv[1] <= sv[0] * 1e-12 {
        return Err(RegisterError::Degenerate);
    }
    let u = svd.u.expect("requested");
    let v = svd.v_t.expect("requested").transpose();
    let d = (v * u.transpose()).determinant().signum();
    let correction = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d));
    let rotation = v * correction * u.transpose();
    Ok(RigidTransform {
        rotation,
        translation: cb - rotation * ca,
    })
}

fn twist_norm(t: &RigidTransform) -> f64 {
    match se3_log(t) {
        Ok(xi) => xi.norm(),
        Err(_) => f64::INFINITY,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpConfig {
    /// The literature setting caps ICP at 10 iterations.
    pub max_iters: usize,
    /// Stop once the increment's twist norm falls below this.
    pub tol: f64,
    /// Optional correspondence gate; pairs farther apart are ignored.
    pub max_distance: Option<f64>,
    /// Start from the transform that aligns the two centroids instead of
    /// the identity.
    pub align_centroids: bool,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iters: 10,
            tol: 1e-7,
            max_distance: None,
            align_centroids: true,
        }
    }
}

/// Point-to-point ICP from `init`. The residual is the RMS nearest-neighbour
/// distance, which never increases from one iteration to the next when no
/// distance gate is set.
pub fn icp(
    source: &PointCloud,
    template: &PointCloud,
    init: &RigidTransform,
    cfg: &IcpConfig,
) -> Result<RegistrationResult, RegisterError> {
    for c in [source, template] {
        if c.len() < 3 {
            return Err(RegisterError::TooFewPoints {
                needed: 3,
                got: c.len(),
            });
        }
    }
    let tree = KdTree::build(template);
    let mut transform = *init;
    let mut history = Vec::with_capacity(cfg.max_iters + 1);
    let mut converged = false;
    let mut iterations = 0;

    let match_pairs = |t: &RigidTransform| -> (Vec<Vec3>, Vec<Vec3>, f64) {
        let moved = apply_transform(t, source);
        let mut src = Vec::with_capacity(moved.len());
        let mut dst = Vec::with_capacity(moved.len());
        let mut sq = 0.0;
        for p in moved.iter() {
            let (j, d2) = tree.nearest(p);
            if let Some(max) = cfg.max_distance {
                if d2 > max * max {
                    continue;
                }
            }
            sq += d2;
            src.push(*p);
            dst.push(template[j]);
        }
        let rms = if src.is_empty() {
            f64::INFINITY
        } else {
            (sq / src.len() as f64).sqrt()
        };
        (src, dst, rms)
    };

    for _ in 0..cfg.max_iters {
        let (src, dst, rms) = match_pairs(&transform);
        history.push(rms);
        let step = kabsch(&src, &dst)?;
        transform = step.compose(&transform);
        iterations += 1;
        if twist_norm(&step) < cfg.tol {
            converged = true;
            break;
        }
    }
    let (_, _, residual) = match_pairs(&transform);
    history.push(residual);
    Ok(RegistrationResult {
        transform,
        iterations,
        residual,
        converged,
        residual_history: history,
    })
}

#[derive(Debug, Clone)]
pub struct IcpRegistrar {
    pub config: IcpConfig,
}

impl IcpRegistrar {
    pub fn new(config: IcpConfig) -> Self {
        Self { config }
    }
}

impl Registrar for IcpRegistrar {
    fn register(&self, source: &PointCloud, template: &PointCloud) -> Result<RegistrationResult, RegisterError> {
        let init = if self.config.align_centroids {
            RigidTransform::from_translation(template.centroid() - source.centroid())
        } else {
            RigidTransform::identity()
        };
        icp(source, template, &init, &self.config)
    }

    fn name(&self) -> &'static str {
        "icp"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLkConfig {
    pub max_iters: usize,
    /// Stop once the twist update norm falls below this.
    pub tol: f64,
    /// Central-difference step (twist units) for the feature Jacobian.
    pub jacobian_step: f64,
    /// Largest accepted condition number of the Jacobian.
    pub max_condition: f64,
}

impl Default for FeatureLkConfig {
    fn default() -> Self {
        Self {
            max_iters: 10,
            tol: 1e-7,
            jacobian_step: 1e-2,
            max_condition: 1e12,
        }
    }
}

/// `K x 6` central-difference Jacobian of the global feature of `cloud`
/// under a twist perturbation at the identity. Columns follow the
/// `[omega; v]` twist layout.
pub fn feature_jacobian(encoder: &EncoderParams, cloud: &PointCloud, step: f64) -> Result<DMatrix<f64>, RegisterError> {
    let k = encoder.feature_size();
    let mut j = DMatrix::zeros(k, 6);
    for axis in 0..6 {
        let mut e = Vector6::zeros();
        e[axis] = step;
        let plus = encoder.encode_global(&apply_transform(&se3_exp(&Twist::from_vector(&e)), cloud))?;
        let minus = encoder.encode_global(&apply_transform(&se3_exp(&Twist::from_vector(&(-e))), cloud))?;
        for r in 0..k {
            j[(r, axis)] = (plus[r] - minus[r]) / (2.0 * step);
        }
    }
    Ok(j)
}

/// Moore-Penrose pseudo-inverse via SVD, refusing ill-conditioned input.
fn checked_pinv(j: &DMatrix<f64>, max_condition: f64) -> Result<DMatrix<f64>, RegisterError> {
    let svd = SVD::new(j.clone(), true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= max_condition) {
        return Err(RegisterError::SingularJacobian(condition));
    }
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let inv_s = DMatrix::from_diagonal(&svd.singular_values.map(|s| 1.0 / s));
    Ok(v_t.transpose() * inv_s * u.transpose())
}

/// Inverse-compositional Lucas-Kanade on the pooled encoder feature. Both
/// clouds are first moved to their centroids; the Jacobian is computed once
/// on the template side.
pub fn feature_lk(
    encoder: &EncoderParams,
    source: &PointCloud,
    template: &PointCloud,
    cfg: &FeatureLkConfig,
) -> Result<RegistrationResult, RegisterError> {
    if source.is_empty() || template.is_empty() {
        return Err(EncoderError::EmptyCloud.into());
    }
    let c_src = source.centroid();
    let c_tmp = template.centroid();
    let src = source.translated(&-c_src);
    let tmp = template.translated(&-c_tmp);

    let target = encoder.encode_global(&tmp)?;
    let target = DVector::from_iterator(target.len(), target.iter().copied());
    let jac = feature_jacobian(encoder, &tmp, cfg.jacobian_step)?;
    let pinv = checked_pinv(&jac, cfg.max_condition)?;

    let residual_at = |t: &RigidTransform| -> Result<DVector<f64>, RegisterError> {
        let f = encoder.encode_global(&apply_transform(t, &src))?;
        Ok(&target - DVector::from_iterator(f.len(), f.iter().copied()))
    };

    let mut t = RigidTransform::identity();
    let mut history = Vec::with_capacity(cfg.max_iters + 1);
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        let r = residual_at(&t)?;
        history.push(r.norm());
        let dx = &pinv * r;
        let step = Vector6::from_iterator(dx.iter().copied());
        t = se3_exp(&Twist::from_vector(&step)).compose(&t);
        iterations += 1;
        if step.norm() < cfg.tol {
            converged = true;
            break;
        }
    }
    let residual = residual_at(&t)?.norm();
    history.push(residual);
    let transform = RigidTransform::from_translation(c_tmp)
        .compose(&t)
        .compose(&RigidTransform::from_translation(-c_src));
    Ok(RegistrationResult {
        transform,
        iterations,
        residual,
        converged,
        residual_history: history,
    })
}

#[derive(Debug, Clone)]
pub struct FeatureLkRegistrar {
    pub encoder: EncoderParams,
    pub config: FeatureLkConfig,
}

impl FeatureLkRegistrar {
    pub fn new(encoder: EncoderParams, config: FeatureLkConfig) -> Self {
        Self { encoder, config }
    }
}

impl Registrar for FeatureLkRegistrar {
    fn register(&self, source: &PointCloud, template: &PointCloud) -> Result<RegistrationResult, RegisterError> {
        feature_lk(&self.encoder, source, template, &self.config)
    }

    fn name(&self) -> &'static str {
        "flk"
    }
}

/// Outcome of [`mask_then_register`]: the registration plus the binary mask
/// that selected the template inliers.
#[derive(Debug, Clone)]
pub struct MaskedRegistration {
    pub result: RegistrationResult,
    pub mask: Vec<bool>,
}

/// Predicts the template inlier mask for `source`, keeps the selected
/// template points, and registers the source onto them.
pub fn mask_then_register(
    params: &MaskNetParams,
    backend: &dyn Registrar,
    template: &PointCloud,
    source: &PointCloud,
    threshold: f64,
) -> Result<MaskedRegistration, MaskError> {
    let mask = params.predict_mask(template, source)?.binary(threshold)?;
    let inliers = apply_mask(&mask, template)?;
    if inliers.is_empty() {
        return Err(MaskError::EmptyMask);
    }
    let result = backend.register(source, &inliers)?;
    Ok(MaskedRegistration { result, mask })
}
