//! PointNet-style set encoder: a shared per-point MLP stack followed by a
//! columnwise max-pool into a single global feature.

use ndarray::{Array1, Array2};
use rand::Rng;
use thiserror::Error;

use crate::geom::PointCloud;
use crate::nn::{maxpool_rows, Activation, DenseGrad, Mlp, MlpTrace, NnError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("cannot encode an empty point cloud")]
    EmptyCloud,
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Output widths of the per-point layers used throughout the literature
/// version of the network.
pub const FULL_ENCODER_WIDTHS: [usize; 5] = [64, 64, 64, 128, 1024];

/// Shared per-point MLP `3 -> w1 -> ... -> K`, ReLU after every layer
/// (including the last, so features are nonnegative).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub mlp: Mlp,
}

/// Recorded forward pass of the encoder over one cloud.
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    pub per_point: MlpTrace,
    pub global: Array1<f64>,
    pub argmax: Vec<usize>,
}

/// `N x 3` row matrix of the cloud's coordinates.
pub fn cloud_matrix(cloud: &PointCloud) -> Array2<f64> {
    let mut m = Array2::zeros((cloud.len(), 3));
    for (i, p) in cloud.iter().enumerate() {
        m[(i, 0)] = p.x;
        m[(i, 1)] = p.y;
        m[(i, 2)] = p.z;
    }
    m
}

impl EncoderParams {
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![3];
        sizes.extend_from_slice(widths);
        Self {
            mlp: Mlp::kaiming(&sizes, Activation::Relu, rng),
        }
    }

    pub fn from_mlp(mlp: Mlp) -> Result<Self, EncoderError> {
        if mlp.input_size() != 3 || mlp.output_activation != Activation::Relu {
            return Err(NnError::ShapeMismatch(
                "encoder must take 3D points and end in ReLU".into(),
            )
            .into());
        }
        Ok(Self { mlp })
    }

    /// Width of the per-point (and global) feature.
    pub fn feature_size(&self) -> usize {
        self.mlp.output_size()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.mlp.sizes()[1..].to_vec()
    }

    pub fn zero_grads(&self) -> Vec<DenseGrad> {
        self.mlp.zero_grads()
    }

    /// `N x K` per-point features; row `i` depends on point `i` only.
    pub fn encode_per_point(&self, cloud: &PointCloud) -> Result<Array2<f64>, EncoderError> {
        if cloud.is_empty() {
            return Err(EncoderError::EmptyCloud);
        }
        Ok(self.mlp.forward(cloud_matrix(cloud).view())?)
    }

    /// Max-pooled global feature of the cloud.
    pub fn encode_global(&self, cloud: &PointCloud) -> Result<Array1<f64>, EncoderError> {
        let f = self.encode_per_point(cloud)?;
        Ok(maxpool_rows(f.view())?.0)
    }

    pub fn encode_traced(&self, cloud: &PointCloud) -> Result<EncoderTrace, EncoderError> {
        if cloud.is_empty() {
            return Err(EncoderError::EmptyCloud);
        }
        let per_point = self.mlp.forward_traced(cloud_matrix(cloud).view())?;
        let (global, argmax) = maxpool_rows(per_point.output().expect("traced").view())?;
        Ok(EncoderTrace {
            per_point,
            global,
            argmax,
        })
    }
}
