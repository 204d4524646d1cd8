use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use lapdeblur_core::data::{
    generate_synthetic_dataset, load_checkpoint, load_checkpoint_as, load_png, save_png, to_luminance, DataError,
    DatasetManifest, SceneSource, SynthConfig,
};
use lapdeblur_core::imgproc::{lab_recompose, rgb_to_lab, ColorSpace, Image};
use lapdeblur_core::metrics::{evaluate, MetricsError, SsimParams};
use lapdeblur_core::pipeline::{evaluate_pairs, restore};
use lapdeblur_core::training::{train as run_training, TrainConfig, TrainError, TrainOptions};

use crate::{EvalArgs, InferArgs, MetricsArgs, SynthArgs, TrainArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn data_error(e: DataError) -> CliError {
    match e {
        DataError::InvalidArgument(_) => usage(e),
        _ => runtime(e),
    }
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| usage(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(usage(format!("{}: no PNG files", dir.display())));
    }
    Ok(files)
}

pub fn synth(a: SynthArgs) -> Result<(), CliError> {
    let source = match &a.base_dir {
        Some(dir) => SceneSource::Images(png_files(dir)?),
        None => SceneSource::Procedural {
            height: a.size as usize,
            width: a.size as usize,
        },
    };
    let cfg = SynthConfig {
        count: a.count as usize,
        seed: a.seed,
        kernel_min: a.kernel_min,
        kernel_max: a.kernel_max,
        angle_min: a.angle_min,
        angle_max: a.angle_max,
        noise_sigma: a.noise_sigma,
        source,
    };
    cfg.validate().map_err(data_error)?;
    let manifest = generate_synthetic_dataset(&a.out, &cfg).map_err(data_error)?;
    println!("{}", a.out.join("manifest.csv").display());
    eprintln!("wrote {} pairs", manifest.len());
    Ok(())
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::Config(_) | TrainError::Resume(_) => usage(e),
        _ => runtime(e),
    }
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let cfg = match &a.config {
        Some(path) => TrainConfig::from_file(path).map_err(|e| usage(format!("{}: {e}", path.display())))?,
        None => TrainConfig::default(),
    };
    let manifest = DatasetManifest::open(&a.data).map_err(runtime)?;
    let pairs = manifest.load_all().map_err(runtime)?;
    let resume = match &a.resume {
        Some(path) => {
            let ckpt = load_checkpoint_as(path, &cfg.arch).map_err(runtime)?;
            let adam = ckpt
                .adam
                .ok_or_else(|| usage(format!("{}: checkpoint has no optimizer state", path.display())))?;
            Some((ckpt.params, adam))
        }
        None => None,
    };
    fs::create_dir_all(&a.out).map_err(|e| runtime(format!("{}: {e}", a.out.display())))?;
    let config_copy = a.out.join("config.txt");
    fs::write(&config_copy, cfg.render()).map_err(|e| runtime(format!("{}: {e}", config_copy.display())))?;

    let ckpt_path = a.out.join("model.ldbn");
    let options = TrainOptions {
        checkpoint: Some(ckpt_path.clone()),
        log: Some(a.out.join("train_log.csv")),
        resume,
        stop_after: a.stop_after,
    };
    let outcome = run_training(&pairs, &cfg, options).map_err(train_error)?;
    let records = &outcome.log.records;
    if let (Some(first), Some(last)) = (records.first(), records.last()) {
        eprintln!(
            "steps {}..{}: wel {:.6} -> {:.6}",
            first.step, last.step, first.wel, last.wel
        );
    }
    println!("{}", ckpt_path.display());
    Ok(())
}

pub fn infer(a: InferArgs) -> Result<(), CliError> {
    let params = load_checkpoint(&a.ckpt).map_err(runtime)?.params;
    let input = load_png(&a.input).map_err(runtime)?;
    if a.color && input.space() != ColorSpace::Srgb {
        return Err(usage(format!(
            "{}: --color needs an RGB input, this image has no color planes",
            a.input.display()
        )));
    }
    let lab = match input.space() {
        ColorSpace::Srgb => Some(rgb_to_lab(&input).map_err(runtime)?),
        _ => None,
    };
    let luminance = match &lab {
        Some(lab) => lab.plane(0).clone(),
        None => input.plane(0).clone(),
    };
    let restored = Image::luminance(restore(&params, &luminance).map_err(runtime)?);
    let out = match (&lab, a.color) {
        (Some(lab), true) => lab_recompose(&restored, lab).map_err(runtime)?,
        _ => restored,
    };
    save_png(&out, &a.output).map_err(runtime)?;
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<(), CliError> {
    let params = load_checkpoint(&a.ckpt).map_err(runtime)?.params;
    let manifest = DatasetManifest::open(&a.data).map_err(runtime)?;
    let pairs = manifest.load_all().map_err(runtime)?;
    if pairs.is_empty() {
        return Err(runtime(format!("{}: dataset is empty", a.data.display())));
    }
    let report = evaluate_pairs(&params, &pairs, &SsimParams::default()).map_err(runtime)?;
    let csv = report.to_csv();
    print!("{csv}");
    if let Some(path) = &a.report {
        fs::write(path, &csv).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

pub fn metrics(a: MetricsArgs) -> Result<(), CliError> {
    let load = |p: &Path| {
        load_png(p)
            .and_then(|img| to_luminance(&img))
            .map_err(runtime)
    };
    let reference = load(&a.reference)?;
    let test = load(&a.test)?;
    let id = a.test.file_stem().map_or("test".into(), |s| s.to_string_lossy().into_owned());
    let report = evaluate(&[(id.as_str(), &test, &reference)], &SsimParams::default()).map_err(|e| match e {
        MetricsError::SizeMismatch(..) | MetricsError::TooSmall(..) => usage(e),
        _ => runtime(e),
    })?;
    let csv = report.to_csv();
    // Header and the single image row; the mean would repeat it.
    for line in csv.lines().take(2) {
        println!("{line}");
    }
    Ok(())
}
