//! Inference and evaluation over whole images.

use thiserror::Error;

use crate::imgproc::{laplacian, ImgError, Plane};
use crate::metrics::{evaluate, MetricReport, MetricsError, SsimParams};
use crate::model::{predict, ModelParams};
use crate::tensor::TensorError;
use crate::training::TrainingPair;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Image(#[from] ImgError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Runs the network on a blurred luminance plane and clamps the result to
/// `[0, 1]`.
pub fn restore(params: &ModelParams, blurred: &Plane) -> Result<Plane, PipelineError> {
    let lap = laplacian(blurred)?;
    let out = predict(params, &blurred.to_tensor(), &lap.to_tensor())?;
    Ok(Plane::from_tensor(&out, 0, 0).clamp01())
}

/// Restores every pair and scores it against its sharp image. The report
/// carries the scores of the unprocessed blurred images as its baseline.
pub fn evaluate_pairs(
    params: &ModelParams,
    pairs: &[TrainingPair],
    ssim: &SsimParams,
) -> Result<MetricReport, PipelineError> {
    let restored = pairs
        .iter()
        .map(|p| restore(params, &p.blurred))
        .collect::<Result<Vec<_>, _>>()?;
    let items: Vec<(&str, &Plane, &Plane)> = pairs
        .iter()
        .zip(&restored)
        .map(|(p, r)| (p.id.as_str(), r, &p.sharp))
        .collect();
    let baseline: Vec<(&str, &Plane, &Plane)> =
        pairs.iter().map(|p| (p.id.as_str(), &p.blurred, &p.sharp)).collect();
    Ok(evaluate(&items, ssim)?.with_baseline(&baseline, ssim)?)
}
