use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Laplacian-guided deblurring of luminance images.
///
/// Exit status: 0 on success, 1 on runtime failure, 2 on usage or
/// configuration errors.
#[derive(Parser, Debug)]
#[command(name = "lapdeblur", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic paired dataset (sharp/, blur/, manifest.csv).
    Synth(SynthArgs),
    /// Train a model on a paired dataset.
    Train(TrainArgs),
    /// Deblur one image.
    Infer(InferArgs),
    /// Score a model on a paired dataset against the unprocessed inputs; prints csv.
    Eval(EvalArgs),
    /// Compare two images with PSNR, SSIM and MS-SSIM.
    Metrics(MetricsArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of pairs.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shortest motion kernel, in pixels.
    #[arg(long, default_value_t = 5)]
    kernel_min: usize,
    /// Longest motion kernel, in pixels (at most 31).
    #[arg(long, default_value_t = 9)]
    kernel_max: usize,
    /// Smallest motion angle, in degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    angle_min: f64,
    /// Largest motion angle, in degrees.
    #[arg(long, default_value_t = 180.0, allow_negative_numbers = true)]
    angle_max: f64,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 0.01)]
    noise_sigma: f64,
    /// Side length of procedural scenes.
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u64).range(1..))]
    size: u64,
    /// Use the PNG files in this directory as sharp images instead of
    /// procedural scenes.
    #[arg(long)]
    base_dir: Option<PathBuf>,
}

/// Config file keys (key = value, `#` comments):
/// num_rdbs, convs_per_rdb, growth, base_channels, w_l2, w_el, lr, beta1,
/// beta2, epsilon, decay, patch, patch_stride, batch, steps, seed, augment,
/// checkpoint_every.
#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Training config file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for model.ldbn, train_log.csv and config.txt.
    #[arg(long)]
    out: PathBuf,
    /// Continue from this checkpoint and its optimizer state.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop after this step, leaving the last checkpoint in place.
    #[arg(long, hide = true)]
    stop_after: Option<u64>,
}

#[derive(Args, Debug)]
struct InferArgs {
    /// Model checkpoint.
    #[arg(long)]
    ckpt: PathBuf,
    /// Blurred PNG (grayscale luminance or RGB).
    #[arg(long)]
    input: PathBuf,
    /// Output PNG.
    #[arg(long)]
    output: PathBuf,
    /// Recombine the restored luminance with the input's color (RGB input only).
    #[arg(long)]
    color: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Write the report as csv to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    /// Reference image.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Image under test.
    #[arg(long)]
    test: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Infer(a) => commands::infer(a),
        Command::Eval(a) => commands::eval(a),
        Command::Metrics(a) => commands::metrics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lapdeblur: {e}");
            ExitCode::from(e.code())
        }
    }
}
