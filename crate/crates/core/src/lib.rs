//! Recursive point cloud generation.
//!
//! A latent code is expanded from a single point at the origin through a
//! sequence of weight-shared expansion stages. Every stage multiplies the
//! point count by its branching factor, and the parent/child relation between
//! stages yields an unsupervised part hierarchy for free.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: a small tape-based reverse-mode differentiator over dense
//!   matrices, generic over `f32` / `f64`.
//! - [`geometry`]: point clouds, an exact kd-tree and the Chamfer distance.
//! - [`model`]: the PointNet-style encoder, the expansion module and the
//!   staged generator with ancestor segmentation.
//! - [`training`]: the objective, AdamW, the training loop and checkpoints.
//! - [`metrics`]: reconstruction CD, MMD, COV, 1-NNA and purity.
//! - [`dataio`]: point/mesh file formats, synthetic shapes, latent
//!   interpolation and PLY export.

pub mod autodiff;
pub mod dataio;
pub mod geometry;
pub mod metrics;
pub mod model;
mod real;
pub mod training;

pub use real::Real;
