//! A small super-resolution GAN on cubed-sphere magnitude tensors.
//!
//! Everything runs in `f64` with hand-written backward passes, on one
//! thread, seeded through ChaCha8 so that training is reproducible bit for
//! bit.

mod checkpoint;
mod discriminator;
mod generator;
mod layers;
mod loss;
mod param;
mod tensor;
mod train;

use std::path::PathBuf;

use thiserror::Error;

use crate::cubesphere::CubeSphereError;
use crate::data::DataError;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use discriminator::Discriminator;
pub use generator::{Generator, ResidualBlock, UpsampleBlock};
pub use layers::{
    leaky, sigmoid, softplus, BatchNorm, Dense, DepthToSpace, Layer, LeakyRelu, PRelu, PanelConv, Softplus,
};
pub use loss::{adversarial_loss, bce_logits, ild, ild_batch, lsd, lsd_batch, ContentLoss, BCE_EPS};
pub use param::{Adam, Param};
pub use tensor::Act;
pub use train::{train, upsample, upsample_magnitudes, EpochRecord, GanConfig, TrainReport, TrainingPair};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite {what} at epoch {epoch}, step {step}")]
    NonFinite { what: String, epoch: usize, step: usize },
    #[error("probability {value} outside (0, 1) at index {index}")]
    Probability { index: usize, value: f64 },
    #[error("content loss normalisation constants are not initialised")]
    Uninitialised,
    #[error("malformed checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    CubeSphere(#[from] CubeSphereError),
}
