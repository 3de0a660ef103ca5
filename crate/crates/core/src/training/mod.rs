//! Training objective, AdamW, the mini-batch training loop and checkpoints.
//!
//! The per-example objective is
//! `cd(X, Y) + lambda * reg + beta * kl`, where `cd` is the Chamfer distance
//! between the input and the generated cloud, `reg` the mean scaling factor
//! over the expansion stages, and `kl` the Gaussian KL term (VAE mode only).
//! Batch losses are means over examples.

mod adamw;
mod checkpoint;
mod config;
mod fit;
mod loss;

use thiserror::Error;

pub use adamw::{adamw_step, OptimizerState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint,
    ManifestEntry, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{AdamWConfig, LrSchedule, TrainConfig};
pub use fit::{fit, fit_from, EpochLog, FitOutcome};
pub use loss::{
    chamfer_on_tape, example_loss_on_tape, gaussian_kl, loss_and_grad, scale_regularizer, total_loss, ExampleLoss,
    LossBreakdown, LossWeights,
};

use crate::autodiff::AutodiffError;
use crate::geometry::GeometryError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} noise vectors, got {found}")]
    NoiseCount { expected: usize, found: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("tensor {name}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint has {0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("checkpoint is missing tensor {0}")]
    MissingTensor(String),
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::ShapeMismatch { name, expected, found } => TrainError::ShapeMismatch { name, expected, found },
            other => TrainError::Model(other),
        }
    }
}
