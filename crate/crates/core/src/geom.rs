//! Rigid-body math on SO(3)/SE(3), point cloud containers, exact k-nearest
//! neighbour search and the pose error metrics used by every downstream
//! module.

use nalgebra::{Matrix3, Vector3, Vector6};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Below this rotation angle the exp/log maps switch to Taylor expansions.
/// Below this angle the exp/log coefficients use their Taylor series; the
/// closed forms cancel catastrophically (about eps / theta^2).
const SERIES_ANGLE: f64 = 1e-2;

/// `se3_log` refuses rotations this close to pi (the axis is ill-defined).
pub const LOG_ANGLE_LIMIT: f64 = std::f64::consts::PI - 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("rotation angle {0} rad is too close to pi for a stable logarithm")]
    AngleNearPi(f64),
    #[error("k = {k} exceeds the target cloud size {count}")]
    KTooLarge { k: usize, count: usize },
    #[error("k must be positive")]
    ZeroK,
}

/// Ordered list of 3D points. The order only carries index alignment with
/// masks; nothing downstream depends on it otherwise.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Vec3>,
}

impl PointCloud {
    /// Builds a cloud, rejecting NaN or infinite coordinates.
    pub fn new(points: Vec<Vec3>) -> Result<Self, GeomError> {
        if let Some(i) = points
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(GeomError::NonFinite(i));
        }
        Ok(Self { points })
    }

    pub fn from_rows(rows: &[[f64; 3]]) -> Result<Self, GeomError> {
        Self::new(rows.iter().map(|r| Vec3::new(r[0], r[1], r[2])).collect())
    }

    pub fn empty() -> Self {
        Self { points: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vec3> {
        self.points.iter()
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }

    pub fn to_rows(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| [p.x, p.y, p.z]).collect()
    }

    /// Arithmetic mean of the points (zero for an empty cloud).
    pub fn centroid(&self) -> Vec3 {
        if self.points.is_empty() {
            return Vec3::zeros();
        }
        let sum = self.points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
        sum / self.points.len() as f64
    }

    /// Centroid whose value does not depend on the point order: each
    /// coordinate column is sorted before summation, so any permutation of
    /// the cloud yields a bit-identical result.
    pub fn order_independent_centroid(&self) -> Vec3 {
        if self.points.is_empty() {
            return Vec3::zeros();
        }
        let n = self.points.len() as f64;
        let mut out = Vec3::zeros();
        let mut column: Vec<f64> = Vec::with_capacity(self.points.len());
        for axis in 0..3 {
            column.clear();
            column.extend(self.points.iter().map(|p| p[axis]));
            column.sort_by(f64::total_cmp);
            out[axis] = column.iter().sum::<f64>() / n;
        }
        out
    }

    pub fn translated(&self, offset: &Vec3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| p + offset).collect(),
        }
    }

    /// Points at the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
        }
    }

    /// Concatenates two clouds.
    pub fn concat(&self, other: &PointCloud) -> PointCloud {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        PointCloud { points }
    }
}

impl std::ops::Index<usize> for PointCloud {
    type Output = Vec3;
    fn index(&self, i: usize) -> &Vec3 {
        &self.points[i]
    }
}

/// Element of SE(3): `p -> rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Mat3) -> Self {
        Self {
            rotation,
            translation: Vec3::zeros(),
        }
    }

    /// Rotation of `angle` radians about a unit `axis`.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let w = axis.normalize() * angle;
        se3_exp(&Twist::new(w, Vec3::zeros()))
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Checks orthogonality and `det = +1` within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        let ortho = (self.rotation.transpose() * self.rotation - Mat3::identity()).norm();
        let det = self.rotation.determinant();
        ortho <= tol
            && (det - 1.0).abs() <= tol
            && self.translation.iter().all(|c| c.is_finite())
    }

    /// Row-major rotation followed by the translation (12 numbers).
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.x,
            t.y,
            t.z,
        ]
    }

    pub fn from_row_major(v: &[f64; 12]) -> Self {
        Self {
            rotation: Mat3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]),
            translation: Vec3::new(v[9], v[10], v[11]),
        }
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }
}

/// se(3) tangent vector: rotation part `omega` (radians) and translational
/// part `v`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub omega: Vec3,
    pub v: Vec3,
}

impl Twist {
    pub fn new(omega: Vec3, v: Vec3) -> Self {
        Self { omega, v }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Layout `[omega; v]`.
    pub fn from_vector(x: &Vector6<f64>) -> Self {
        Self {
            omega: Vec3::new(x[0], x[1], x[2]),
            v: Vec3::new(x[3], x[4], x[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.omega.x,
            self.omega.y,
            self.omega.z,
            self.v.x,
            self.v.y,
            self.v.z,
        )
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }
}

pub fn hat(w: &Vec3) -> Mat3 {
    Mat3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

fn vee(m: &Mat3) -> Vec3 {
    Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rotation angle from a rotation matrix, via atan2 for accuracy near 0 and pi.
fn rotation_angle(r: &Mat3) -> f64 {
    let s = vee(&(r - r.transpose())).norm() * 0.5;
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    s.atan2(c)
}

/// Exponential map se(3) -> SE(3) (Rodrigues rotation, closed-form `V`).
pub fn se3_exp(xi: &Twist) -> RigidTransform {
    let w = xi.omega;
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let (a, b, c) = if theta < SERIES_ANGLE {
        let theta4 = theta2 * theta2;
        (
            1.0 - theta2 / 6.0 + theta4 / 120.0,
            0.5 - theta2 / 24.0 + theta4 / 720.0,
            1.0 / 6.0 - theta2 / 120.0 + theta4 / 5040.0,
        )
    } else {
        let (s, co) = theta.sin_cos();
        (
            s / theta,
            (1.0 - co) / theta2,
            (theta - s) / (theta2 * theta),
        )
    };
    let k = hat(&w);
    let k2 = k * k;
    let rotation = Mat3::identity() + k * a + k2 * b;
    let v = Mat3::identity() + k * b + k2 * c;
    RigidTransform {
        rotation,
        translation: v * xi.v,
    }
}

/// Logarithm map SE(3) -> se(3). Fails for rotations within 1e-6 rad of pi.
pub fn se3_log(t: &RigidTransform) -> Result<Twist, GeomError> {
    let r = &t.rotation;
    let theta = rotation_angle(r);
    if theta >= LOG_ANGLE_LIMIT {
        return Err(GeomError::AngleNearPi(theta));
    }
    let theta2 = theta * theta;
    let skew = vee(&(r - r.transpose()));
    let (scale, d) = if theta < SERIES_ANGLE {
        let theta4 = theta2 * theta2;
        (
            0.5 + theta2 / 12.0 + 7.0 * theta4 / 720.0,
            1.0 / 12.0 + theta2 / 720.0 + theta4 / 30240.0,
        )
    } else {
        let (s, co) = theta.sin_cos();
        let a = s / theta;
        let b = (1.0 - co) / theta2;
        (theta / (2.0 * s), (1.0 - a / (2.0 * b)) / theta2)
    };
    let omega = if theta > std::f64::consts::FRAC_PI_2 {
        // skew = 2 sin(theta) n loses relative precision as theta -> pi;
        // read the axis off the symmetric part (1 - cos) n n^T instead.
        let co = theta.cos();
        let sym = (r + r.transpose()) * 0.5 - Mat3::identity() * co;
        let i = (0..3).max_by(|&a, &b| sym[(a, a)].total_cmp(&sym[(b, b)])).expect("3 rows");
        let mut n: Vec3 = sym.column(i).into_owned() / (sym[(i, i)] * (1.0 - co)).sqrt();
        n /= n.norm();
        if n.dot(&skew) < 0.0 {
            n = -n;
        }
        n * theta
    } else {
        skew * scale
    };
    let k = hat(&omega);
    let v_inv = Mat3::identity() - k * 0.5 + k * k * d;
    Ok(Twist {
        omega,
        v: v_inv * t.translation,
    })
}

pub fn apply_transform(t: &RigidTransform, cloud: &PointCloud) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| t.apply_point(p)).collect(),
    }
}

/// Geodesic angle between the two rotations, in degrees (`[0, 180]`).
///
/// Evaluated as atan2(sin, cos) rather than arccos of the trace, which
/// loses about 1e-8 rad of resolution near zero.
pub fn rotation_error_deg(estimate: &RigidTransform, truth: &RigidTransform) -> f64 {
    rotation_angle(&(truth.rotation.transpose() * estimate.rotation)).to_degrees()
}

pub fn translation_error(estimate: &RigidTransform, truth: &RigidTransform) -> f64 {
    (estimate.translation - truth.translation).norm()
}

#[inline]
fn dist2(a: &Vec3, b: &Vec3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum KdNode {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Static kd-tree over a point cloud. Query results are identical to an
/// exhaustive scan ordered by `(squared distance, index)`.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<KdNode>,
}

impl KdTree {
    pub fn build(cloud: &PointCloud) -> Self {
        let mut tree = KdTree {
            points: cloud.points.clone(),
            order: (0..cloud.len()).collect(),
            nodes: Vec::new(),
        };
        if !tree.points.is_empty() {
            tree.build_node(0, tree.points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(KdNode::Leaf { start, end });
            return id;
        }
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        if hi[axis] <= lo[axis] {
            // all points coincide
            self.nodes.push(KdNode::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis])
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(KdNode::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = KdNode::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// Indices of the `k` nearest points to `q`, ascending by distance with
    /// ties broken by the lower index.
    pub fn knn(&self, q: &Vec3, k: usize) -> Vec<usize> {
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.search(0, q, k, &mut best);
        }
        best.into_iter().map(|(_, i)| i).collect()
    }

    /// Nearest point index and its squared distance.
    pub fn nearest(&self, q: &Vec3) -> (usize, f64) {
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(2);
        self.search(0, q, 1, &mut best);
        (best[0].1, best[0].0)
    }

    fn search(&self, node: usize, q: &Vec3, k: usize, best: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            KdNode::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = dist2(q, &self.points[i]);
                    insert_candidate(best, k, d, i);
                }
            }
            KdNode::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, k, best);
                // equal distances must still be visited so lower indices win ties
                if best.len() < k || diff * diff <= best[best.len() - 1].0 {
                    self.search(far, q, k, best);
                }
            }
        }
    }
}

fn insert_candidate(best: &mut Vec<(f64, usize)>, k: usize, d: f64, i: usize) {
    let key = (d, i);
    let less = |a: &(f64, usize), b: &(f64, usize)| a.0 < b.0 || (a.0 == b.0 && a.1 < b.1);
    if best.len() == k {
        if !less(&key, &best[k - 1]) {
            return;
        }
        best.pop();
    }
    let pos = best.partition_point(|e| less(e, &key));
    best.insert(pos, key);
}

/// For each query point, the indices of its `k` nearest target points.
pub fn nearest_neighbors(
    query: &PointCloud,
    target: &PointCloud,
    k: usize,
) -> Result<Vec<Vec<usize>>, GeomError> {
    if k == 0 {
        return Err(GeomError::ZeroK);
    }
    if k > target.len() {
        return Err(GeomError::KTooLarge {
            k,
            count: target.len(),
        });
    }
    let tree = KdTree::build(target);
    Ok(query.iter().map(|q| tree.knn(q, k)).collect())
}
