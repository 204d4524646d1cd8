//! Files on disk: PNG images, paired datasets, synthetic generation and
//! model checkpoints.

mod checkpoint;
mod dataset;
mod png;
mod synth;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_as, save_checkpoint, Checkpoint,
    FORMAT_VERSION, MAGIC,
};
pub use dataset::{to_luminance, DatasetManifest, ManifestEntry, Provenance, MANIFEST_HEADER};
pub use png::{load_png, quantize, quantize_plane, save_png};
pub use synth::{generate_synthetic_dataset, procedural_scene, regenerate_blur, SceneSource, SynthConfig};

use crate::imgproc::ImgError;
use crate::model::ModelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("cannot decode {}: {message}", path.display())]
    Decode { path: PathBuf, message: String },
    #[error("cannot encode {}: {message}", path.display())]
    Encode { path: PathBuf, message: String },
    #[error("{}: only 8-bit PNG files are supported", .0.display())]
    UnsupportedDepth(PathBuf),
    #[error("{}: unsupported pixel layout {layout}, expected 8-bit grayscale or RGB", path.display())]
    UnsupportedLayout { path: PathBuf, layout: String },
    #[error("cannot save image: {0}")]
    Unsavable(&'static str),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found} is not supported (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
    #[error("checkpoint checksum mismatch; the file is corrupted")]
    Checksum,
    #[error("checkpoint file is truncated")]
    Truncated,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("{}: not a dataset (expected sharp/ and blur/ directories)", .0.display())]
    NotADataset(PathBuf),
    #[error("pair {id}: sharp is {sharp:?}, blurred is {blurred:?}")]
    PairSize {
        id: String,
        sharp: (usize, usize),
        blurred: (usize, usize),
    },
    #[error("pair {0}: blurred image is identical to the sharp image")]
    Degenerate(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Image(#[from] ImgError),
}

pub(crate) fn io_error(path: &Path, e: impl std::fmt::Display) -> DataError {
    DataError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}
