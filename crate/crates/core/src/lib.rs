//! Laplacian-guided single-image deblurring: a residual dense network fed
//! with luminance and its Laplacian, trained with a weighted edge loss.
//!
//! The crate carries its own small reverse-mode autodiff ([`tensor`]), the
//! image preprocessing ([`imgproc`]), the network ([`model`]), losses and
//! optimizer ([`training`]), quality metrics ([`metrics`]) and file formats
//! ([`data`]).

pub mod data;
pub mod imgproc;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod seed;
pub mod tensor;
pub mod training;

pub use data::{DataError, DatasetManifest};
pub use imgproc::{ColorSpace, Image, ImgError, Plane};
pub use metrics::{MetricReport, MetricRow, MetricsError, SsimParams};
pub use model::{ArchConfig, ModelError, ModelParams};
pub use tensor::{Graph, Shape, Tensor, TensorError, Var};
pub use training::{AdamConfig, AdamState, LossWeights, TrainConfig, TrainError};
