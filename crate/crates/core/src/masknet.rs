//! The mask network: per-point template features concatenated with the
//! tiled global feature of the source, a per-point head ending in a sigmoid,
//! thresholding into a binary mask, and the pipelines built on it
//! (iterative refinement with a registrar, denoising).
//!
//! Both clouds are translated to their own centroid before encoding, so the
//! predicted mask does not depend on where either cloud sits in space. The
//! centroid is computed order-independently, which keeps the permutation
//! properties exact.

use ndarray::{s, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::encoder::{EncoderError, EncoderParams, EncoderTrace, FULL_ENCODER_WIDTHS};
use crate::geom::{apply_transform, PointCloud, RigidTransform};
use crate::nn::{maxpool_backward, Activation, DenseGrad, DenseLayer, Mlp, MlpTrace, NnError};
use crate::register::{RegisterError, Registrar};

/// Default binary threshold on the predicted probabilities.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub const FULL_HEAD_WIDTHS: [usize; 5] = [1024, 512, 256, 128, 1];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskError {
    #[error("cannot predict a mask for an empty cloud")]
    EmptyCloud,
    #[error("threshold {0} must lie strictly between 0 and 1")]
    BadThreshold(f64),
    #[error("mask has {mask} entries but the cloud has {cloud} points")]
    LengthMismatch { mask: usize, cloud: usize },
    #[error("thresholded mask selects no points")]
    EmptyMask,
    #[error("max_iters must be at least 1")]
    NoIterations,
    #[error("architecture: {0}")]
    Architecture(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("registration failed: {0}")]
    RegistrationFailed(#[from] Box<RegisterError>),
}

impl From<EncoderError> for MaskError {
    fn from(e: EncoderError) -> Self {
        match e {
            EncoderError::EmptyCloud => MaskError::EmptyCloud,
            EncoderError::Nn(n) => MaskError::Nn(n),
        }
    }
}

impl From<RegisterError> for MaskError {
    fn from(e: RegisterError) -> Self {
        MaskError::RegistrationFailed(Box::new(e))
    }
}

/// Layer widths of the encoder and head. The head input is twice the
/// encoder's feature width; the head must end in a single output.
#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Architecture {
    pub encoder: Vec<usize>,
    pub head: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self::full()
    }
}

impl Architecture {
    /// Encoder (64, 64, 64, 128, 1024), head (1024, 512, 256, 128, 1).
    pub fn full() -> Self {
        Self {
            encoder: FULL_ENCODER_WIDTHS.to_vec(),
            head: FULL_HEAD_WIDTHS.to_vec(),
        }
    }

    /// Same depth as [`Architecture::full`] with a 256-wide feature, small
    /// enough to train on a single CPU core.
    pub fn desk() -> Self {
        Self {
            encoder: vec![32, 32, 32, 64, 128],
            head: vec![128, 64, 32, 16, 1],
        }
    }

    pub fn validate(&self) -> Result<(), MaskError> {
        if self.encoder.is_empty() || self.head.is_empty() {
            return Err(MaskError::Architecture("empty layer list".into()));
        }
        if self.encoder.iter().chain(&self.head).any(|&w| w == 0) {
            return Err(MaskError::Architecture("zero-width layer".into()));
        }
        if *self.head.last().unwrap() != 1 {
            return Err(MaskError::Architecture("head must end in one output".into()));
        }
        Ok(())
    }

    pub fn feature_size(&self) -> usize {
        *self.encoder.last().unwrap()
    }

    /// `(input, output)` of every layer: encoder layers first, then head.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut input = 3;
        for &w in &self.encoder {
            shapes.push((input, w));
            input = w;
        }
        let mut input = 2 * self.feature_size();
        for &w in &self.head {
            shapes.push((input, w));
            input = w;
        }
        shapes
    }
}

/// Per-point head over `[phi(x_i) | g]`. The first layer is stored whole
/// (`H1 x 2K`); its left block acts on the per-point feature and its right
/// block on the tiled global feature.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskHeadParams {
    pub first: DenseLayer,
    /// Remaining layers; sigmoid on the output, ReLU elsewhere.
    pub rest: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskNetParams {
    pub encoder: EncoderParams,
    pub head: MaskHeadParams,
}

/// Per-point inlier probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub probs: Vec<f64>,
}

impl Mask {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn binary(&self, threshold: f64) -> Result<Vec<bool>, MaskError> {
        threshold_mask(&self.probs, threshold)
    }
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct MaskForward {
    template: EncoderTrace,
    source: EncoderTrace,
    /// ReLU output of the head's first layer.
    first_out: Array2<f64>,
    rest: MlpTrace,
    pub probs: Vec<f64>,
}

fn centered(cloud: &PointCloud) -> PointCloud {
    cloud.translated(&-cloud.order_independent_centroid())
}

impl MaskNetParams {
    /// Kaiming-initialized network, deterministic in `seed`.
    pub fn new(arch: &Architecture, seed: u64) -> Result<Self, MaskError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = EncoderParams::new(&arch.encoder, &mut rng);
        let k = arch.feature_size();
        let first = DenseLayer::kaiming(2 * k, arch.head[0], &mut rng);
        let mut sizes = vec![arch.head[0]];
        sizes.extend_from_slice(&arch.head[1..]);
        let rest = if sizes.len() > 1 {
            Mlp::kaiming(&sizes, Activation::Sigmoid, &mut rng)
        } else {
            Mlp {
                layers: Vec::new(),
                output_activation: Activation::Sigmoid,
            }
        };
        Ok(Self {
            encoder,
            head: MaskHeadParams { first, rest },
        })
    }

    /// Rebuilds a network from its layers in [`Architecture::layer_shapes`]
    /// order.
    pub fn from_layers(arch: &Architecture, mut layers: Vec<DenseLayer>) -> Result<Self, MaskError> {
        arch.validate()?;
        let shapes = arch.layer_shapes();
        if layers.len() != shapes.len() {
            return Err(MaskError::Architecture(format!(
                "expected {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (i, (layer, &(input, output))) in layers.iter().zip(&shapes).enumerate() {
            if layer.input_size() != input || layer.output_size() != output {
                return Err(MaskError::Architecture(format!(
                    "layer {i} is {}x{}, expected {input}x{output}",
                    layer.input_size(),
                    layer.output_size()
                )));
            }
        }
        let head_layers = layers.split_off(arch.encoder.len());
        let encoder = EncoderParams::from_mlp(Mlp::new(layers, Activation::Relu)?)?;
        let mut head_layers = head_layers.into_iter();
        let first = head_layers.next().expect("validated");
        let rest = Mlp::new(head_layers.collect(), Activation::Sigmoid)?;
        Ok(Self {
            encoder,
            head: MaskHeadParams { first, rest },
        })
    }

    /// A single-layer head (`[1]`) means the first layer is also the output.
    fn single_layer_head(&self) -> bool {
        self.head.rest.layers.is_empty()
    }

    pub fn architecture(&self) -> Architecture {
        let mut head = vec![self.head.first.output_size()];
        head.extend(self.head.rest.layers.iter().map(DenseLayer::output_size));
        Architecture {
            encoder: self.encoder.widths(),
            head,
        }
    }

    pub fn layers(&self) -> Vec<&DenseLayer> {
        let mut v: Vec<&DenseLayer> = self.encoder.mlp.layers.iter().collect();
        v.push(&self.head.first);
        v.extend(self.head.rest.layers.iter());
        v
    }

    pub fn layers_mut(&mut self) -> Vec<&mut DenseLayer> {
        let mut v: Vec<&mut DenseLayer> = self.encoder.mlp.layers.iter_mut().collect();
        v.push(&mut self.head.first);
        v.extend(self.head.rest.layers.iter_mut());
        v
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    pub fn zero_grads(&self) -> Vec<DenseGrad> {
        self.layers().into_iter().map(DenseGrad::zeros_like).collect()
    }

    fn head_forward(
        &self,
        template_features: &Array2<f64>,
        global: &Array1<f64>,
    ) -> Result<(Array2<f64>, MlpTrace), MaskError> {
        let k = self.encoder.feature_size();
        let first = &self.head.first;
        if first.input_size() != 2 * k {
            return Err(NnError::ShapeMismatch(format!(
                "head expects {} inputs, encoder gives 2x{k}",
                first.input_size()
            ))
            .into());
        }
        let w_point = first.weights.slice(s![.., ..k]);
        let w_global = first.weights.slice(s![.., k..]);
        // [phi | g] W^T = phi W_point^T + g W_global^T
        let offset = w_global.dot(global) + &first.bias;
        let mut z = template_features.dot(&w_point.t());
        z += &offset;
        if self.single_layer_head() {
            Activation::Sigmoid.apply(&mut z);
            let trace = MlpTrace {
                activations: vec![z.clone()],
            };
            return Ok((z, trace));
        }
        Activation::Relu.apply(&mut z);
        let trace = self.head.rest.forward_traced(z.view())?;
        Ok((z, trace))
    }

    /// Inlier probability for every template point given the source.
    pub fn predict_mask(&self, template: &PointCloud, source: &PointCloud) -> Result<Mask, MaskError> {
        Ok(Mask {
            probs: self.forward_traced(template, source)?.probs,
        })
    }

    pub fn forward_traced(&self, template: &PointCloud, source: &PointCloud) -> Result<MaskForward, MaskError> {
        if template.is_empty() || source.is_empty() {
            return Err(MaskError::EmptyCloud);
        }
        let t = self.encoder.encode_traced(&centered(template))?;
        let src = self.encoder.encode_traced(&centered(source))?;
        let (first_out, rest) = self.head_forward(t.per_point.output().expect("traced"), &src.global)?;
        let out = rest.output().expect("traced");
        let probs = out.column(0).to_vec();
        Ok(MaskForward {
            template: t,
            source: src,
            first_out,
            rest,
            probs,
        })
    }

    /// Accumulates parameter gradients for `dL/dprobs` into `grads`
    /// (ordered as [`MaskNetParams::layers`]).
    pub fn backward(&self, fwd: &MaskForward, dprobs: &[f64], grads: &mut [DenseGrad]) -> Result<(), MaskError> {
        let n_enc = self.encoder.mlp.layers.len();
        if grads.len() != n_enc + 1 + self.head.rest.layers.len() {
            return Err(NnError::ShapeMismatch("gradient buffer count".into()).into());
        }
        if dprobs.len() != fwd.probs.len() {
            return Err(MaskError::LengthMismatch {
                mask: dprobs.len(),
                cloud: fwd.probs.len(),
            });
        }
        let n = dprobs.len();
        let g_out = Array2::from_shape_vec((n, 1), dprobs.to_vec()).expect("n x 1");
        let (enc_grads, head_grads) = grads.split_at_mut(n_enc);
        let (first_grad, rest_grads) = head_grads.split_at_mut(1);
        let dz = if self.single_layer_head() {
            let mut g = g_out;
            Activation::Sigmoid.backprop(&fwd.first_out, &mut g);
            g
        } else {
            let mut g = self
                .head
                .rest
                .backward(&fwd.rest, g_out, rest_grads, true)?
                .ok_or(NnError::NoForwardRecorded)?;
            Activation::Relu.backprop(&fwd.first_out, &mut g);
            g
        };
        let k = self.encoder.feature_size();
        let phi = fwd.template.per_point.output().ok_or(NnError::NoForwardRecorded)?;
        let first = &self.head.first;
        let dz_sum = dz.sum_axis(Axis(0));
        {
            let fg = &mut first_grad[0];
            let mut w_point = fg.weights.slice_mut(s![.., ..k]);
            ndarray::linalg::general_mat_mul(1.0, &dz.t(), phi, 1.0, &mut w_point);
            let mut w_global = fg.weights.slice_mut(s![.., k..]);
            for (r, &d) in dz_sum.iter().enumerate() {
                w_global
                    .row_mut(r)
                    .scaled_add(d, &fwd.source.global);
            }
            fg.bias += &dz_sum;
        }
        let d_phi = dz.dot(&first.weights.slice(s![.., ..k]));
        let d_global = first.weights.slice(s![.., k..]).t().dot(&dz_sum);
        self.encoder
            .mlp
            .backward(&fwd.template.per_point, d_phi, enc_grads, false)?;
        let src_rows = fwd.source.per_point.activations[0].nrows();
        let d_src = maxpool_backward(d_global.view(), &fwd.source.argmax, src_rows);
        self.encoder
            .mlp
            .backward(&fwd.source.per_point, d_src, enc_grads, false)?;
        Ok(())
    }
}

/// `C_i = 1` iff `probs_i >= threshold`.
pub fn threshold_mask(probs: &[f64], threshold: f64) -> Result<Vec<bool>, MaskError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(MaskError::BadThreshold(threshold));
    }
    Ok(probs.iter().map(|&p| p >= threshold).collect())
}

/// Keeps the points whose mask entry is set, preserving order. An all-false
/// mask yields an empty cloud.
pub fn apply_mask(mask: &[bool], cloud: &PointCloud) -> Result<PointCloud, MaskError> {
    if mask.len() != cloud.len() {
        return Err(MaskError::LengthMismatch {
            mask: mask.len(),
            cloud: cloud.len(),
        });
    }
    let kept: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect();
    Ok(cloud.select(&kept))
}

/// Result of [`refine_iteratively`].
#[derive(Debug, Clone)]
pub struct Refinement {
    pub mask: Mask,
    /// Source-to-template estimate after each iteration (cumulative).
    pub trajectory: Vec<RigidTransform>,
}

impl Refinement {
    pub fn transform(&self) -> RigidTransform {
        *self.trajectory.last().expect("at least one iteration")
    }
}

/// Alternates mask prediction and registration of the source onto the
/// masked template, moving the source by each estimate before the next
/// round.
pub fn refine_iteratively(
    params: &MaskNetParams,
    template: &PointCloud,
    source: &PointCloud,
    registrar: &dyn Registrar,
    threshold: f64,
    max_iters: usize,
) -> Result<Refinement, MaskError> {
    if max_iters == 0 {
        return Err(MaskError::NoIterations);
    }
    let mut current = source.clone();
    let mut total = RigidTransform::identity();
    let mut trajectory = Vec::with_capacity(max_iters);
    let mut mask = None;
    for _ in 0..max_iters {
        let m = params.predict_mask(template, &current)?;
        let binary = m.binary(threshold)?;
        let inliers = apply_mask(&binary, template)?;
        if inliers.is_empty() {
            return Err(MaskError::EmptyMask);
        }
        let step = registrar.register(&current, &inliers)?.transform;
        current = apply_transform(&step, &current);
        total = step.compose(&total);
        trajectory.push(total);
        mask = Some(m);
    }
    Ok(Refinement {
        mask: mask.expect("max_iters >= 1"),
        trajectory,
    })
}

/// Removes outliers from `noisy` using a clean reference cloud. The roles
/// are swapped relative to [`MaskNetParams::predict_mask`]: the mask runs
/// over the noisy cloud's points and the reference supplies the global
/// feature. `params` should be a network trained for this wiring.
pub fn denoise(
    params: &MaskNetParams,
    reference: &PointCloud,
    noisy: &PointCloud,
    threshold: f64,
) -> Result<(PointCloud, Mask), MaskError> {
    let mask = params.predict_mask(noisy, reference)?;
    let kept = apply_mask(&mask.binary(threshold)?, noisy)?;
    Ok((kept, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use crate::register::{IcpConfig, IcpRegistrar};
    use rand::Rng;

    fn tiny_arch() -> Architecture {
        Architecture {
            encoder: vec![8, 8, 16],
            head: vec![16, 8, 1],
        }
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    fn shuffled(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            p.swap(i, rng.random_range(0..=i));
        }
        p
    }

    #[test]
    fn full_architecture_layer_shapes() {
        let shapes = Architecture::full().layer_shapes();
        assert_eq!(
            shapes,
            vec![
                (3, 64),
                (64, 64),
                (64, 64),
                (64, 128),
                (128, 1024),
                (2048, 1024),
                (1024, 512),
                (512, 256),
                (256, 128),
                (128, 1)
            ]
        );
        let params = MaskNetParams::new(&Architecture::full(), 0).unwrap();
        assert_eq!(params.architecture(), Architecture::full());
    }

    #[test]
    fn from_layers_round_trip() {
        let p = MaskNetParams::new(&tiny_arch(), 3).unwrap();
        let layers: Vec<DenseLayer> = p.layers().into_iter().cloned().collect();
        assert_eq!(MaskNetParams::from_layers(&tiny_arch(), layers).unwrap(), p);
    }

    #[test]
    fn source_permutation_invariance_and_template_equivariance() {
        let params = MaskNetParams::new(&tiny_arch(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_cloud(&mut rng, 30);
        let y = random_cloud(&mut rng, 20);
        let base = params.predict_mask(&x, &y).unwrap();
        assert_eq!(base.len(), 30);
        assert!(base.probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
        let py = y.select(&shuffled(&mut rng, 20));
        assert_eq!(params.predict_mask(&x, &py).unwrap(), base);
        let sigma = shuffled(&mut rng, 30);
        let px = params.predict_mask(&x.select(&sigma), &y).unwrap();
        for (i, &s) in sigma.iter().enumerate() {
            assert_eq!(px.probs[i], base.probs[s]);
        }
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let params = MaskNetParams::new(&tiny_arch(), 1).unwrap();
        let x = PointCloud::from_rows(&[[0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(
            params.predict_mask(&x, &PointCloud::empty()),
            Err(MaskError::EmptyCloud)
        );
        assert_eq!(
            params.predict_mask(&PointCloud::empty(), &x),
            Err(MaskError::EmptyCloud)
        );
    }

    #[test]
    fn threshold_cases() {
        assert_eq!(threshold_mask(&[0.9; 4], 0.5).unwrap(), vec![true; 4]);
        assert_eq!(threshold_mask(&[0.5], 0.5).unwrap(), vec![true]);
        assert_eq!(threshold_mask(&[0.5], 0.0), Err(MaskError::BadThreshold(0.0)));
        assert_eq!(threshold_mask(&[0.5], 1.0), Err(MaskError::BadThreshold(1.0)));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let probs: Vec<f64> = (0..500).map(|_| rng.random()).collect();
        let mut last = usize::MAX;
        for step in 1..100 {
            let count = threshold_mask(&probs, step as f64 / 100.0)
                .unwrap()
                .iter()
                .filter(|&&b| b)
                .count();
            assert!(count <= last);
            last = count;
        }
    }

    #[test]
    fn apply_mask_cases() {
        let p = PointCloud::from_rows(&[[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]]).unwrap();
        assert_eq!(apply_mask(&[true; 3], &p).unwrap(), p);
        assert_eq!(
            apply_mask(&[true, false, true], &p).unwrap(),
            PointCloud::from_rows(&[[1.0, 0.0, 0.0], [3.0, 0.0, 0.0]]).unwrap()
        );
        assert!(apply_mask(&[false; 3], &p).unwrap().is_empty());
        assert_eq!(
            apply_mask(&[true], &p),
            Err(MaskError::LengthMismatch { mask: 1, cloud: 3 })
        );
    }

    proptest::proptest! {
        #[test]
        fn apply_mask_counts_and_monotone(bits in proptest::collection::vec(proptest::bool::ANY, 1..60), extra in proptest::collection::vec(proptest::bool::ANY, 60)) {
            let n = bits.len();
            let cloud = PointCloud::new((0..n).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect()).unwrap();
            let out = apply_mask(&bits, &cloud).unwrap();
            proptest::prop_assert_eq!(out.len(), bits.iter().filter(|&&b| b).count());
            let wider: Vec<bool> = bits.iter().zip(&extra).map(|(&a, &b)| a || b).collect();
            let out_wide = apply_mask(&wider, &cloud).unwrap();
            for p in out.iter() {
                proptest::prop_assert!(out_wide.iter().any(|q| q == p));
            }
        }
    }

    /// Central finite differences of the full pipeline loss against the
    /// analytic gradient, for every parameter of a small network.
    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let mut params = MaskNetParams::new(&tiny_arch(), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for l in params.layers_mut() {
            l.bias.mapv_inplace(|_| rng.random_range(-0.2..0.2));
        }
        let x = random_cloud(&mut rng, 16);
        let y = random_cloud(&mut rng, 11);
        let gt: Vec<f64> = (0..16).map(|i| (i % 2) as f64).collect();
        let loss = |p: &MaskNetParams| -> f64 {
            let m = p.predict_mask(&x, &y).unwrap();
            m.probs.iter().zip(&gt).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 16.0
        };
        let fwd = params.forward_traced(&x, &y).unwrap();
        let dprobs: Vec<f64> = fwd.probs.iter().zip(&gt).map(|(a, b)| 2.0 * (a - b) / 16.0).collect();
        let mut grads = params.zero_grads();
        params.backward(&fwd, &dprobs, &mut grads).unwrap();
        let h = 1e-5;
        let n_layers = params.layers().len();
        for l in 0..n_layers {
            let (rows, cols) = params.layers()[l].weights.dim();
            for idx in 0..rows * cols {
                let (r, c) = (idx / cols, idx % cols);
                let orig = params.layers()[l].weights[(r, c)];
                params.layers_mut()[l].weights[(r, c)] = orig + h;
                let up = loss(&params);
                params.layers_mut()[l].weights[(r, c)] = orig - h;
                let down = loss(&params);
                params.layers_mut()[l].weights[(r, c)] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = grads[l].weights[(r, c)];
                assert!(
                    (fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-7),
                    "layer {l} w[{r},{c}]: fd {fd} analytic {an}"
                );
            }
        }
    }

    #[test]
    fn refine_runs_requested_iterations() {
        let params = MaskNetParams::new(&tiny_arch(), 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_cloud(&mut rng, 60);
        let icp = IcpRegistrar::new(IcpConfig::default());
        let r = refine_iteratively(&params, &x, &x, &icp, 1e-6, 1).unwrap();
        assert_eq!(r.trajectory.len(), 1);
        let r = refine_iteratively(&params, &x, &x, &icp, 1e-6, 3).unwrap();
        assert_eq!(r.trajectory.len(), 3);
        assert!(crate::geom::rotation_error_deg(&r.transform(), &RigidTransform::identity()) < 1.0);
        assert!(matches!(
            refine_iteratively(&params, &x, &x, &icp, 0.5, 0),
            Err(MaskError::NoIterations)
        ));
    }

    #[test]
    fn denoise_output_is_subsequence() {
        let params = MaskNetParams::new(&tiny_arch(), 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_cloud(&mut rng, 40);
        let y = random_cloud(&mut rng, 25);
        let (kept, mask) = denoise(&params, &x, &y, 0.5).unwrap();
        assert_eq!(mask.len(), 25);
        let mut j = 0;
        for p in kept.iter() {
            while y[j] != *p {
                j += 1;
            }
            j += 1;
        }
    }
}
