//! Loss functions, the optimizer and the training loop.

mod adam;
mod config;
mod loss;
mod train;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use config::{ConfigError, TrainConfig};
pub use loss::{edge_loss, l2_loss, wel_loss, LossParts, LossWeights};
pub use train::{train, TrainLog, TrainOptions, TrainOutcome, TrainRecord, TrainingPair};

use crate::data::DataError;
use crate::imgproc::ImgError;
use crate::model::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("gradient list does not match parameters: {0}")]
    GradientMismatch(String),
    #[error("non-finite gradient in parameter tensor {tensor}")]
    NonFiniteGradient { tensor: usize },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("resume state does not match the configuration: {0}")]
    Resume(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Image(#[from] ImgError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}
