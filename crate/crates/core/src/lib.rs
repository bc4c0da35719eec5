//! Learned point-correspondence masks for partial-to-full point cloud
//! registration.

pub mod cli;
pub mod data;
pub mod encoder;
pub mod eval;
pub mod geom;
pub mod masknet;
pub mod nn;
pub mod register;
pub mod train;

pub use geom::{PointCloud, RigidTransform};
pub use masknet::{Architecture, Mask, MaskNetParams};
