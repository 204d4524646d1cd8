use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{adam_step, wel_loss, AdamState, TrainConfig, TrainError};
use crate::data::save_checkpoint;
use crate::imgproc::{augment4, extract_patches, laplacian, PatchMode, Plane};
use crate::model::{rdn_forward, ModelParams};
use crate::seed::{derive, Stream};
use crate::tensor::{Graph, Tensor, TensorError};

/// A sharp/blurred luminance pair.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub id: String,
    pub sharp: Plane,
    pub blurred: Plane,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainRecord {
    pub step: u64,
    pub wel: f64,
    pub l2: f64,
    pub el: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

pub const LOG_HEADER: &str = "step,wel,l2,el,lr,seconds";

impl TrainLog {
    pub fn write_rows(records: &[TrainRecord], out: &mut impl Write) -> std::io::Result<()> {
        for r in records {
            writeln!(out, "{},{:e},{:e},{:e},{:e},{:.3}", r.step, r.wel, r.l2, r.el, r.lr, r.seconds)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        writeln!(buf, "{LOG_HEADER}").unwrap();
        Self::write_rows(&self.records, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    /// Loss columns only; wall time is excluded so reruns compare equal.
    pub fn losses(&self) -> Vec<(u64, f64, f64, f64)> {
        self.records.iter().map(|r| (r.step, r.wel, r.l2, r.el)).collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Checkpoint written at every boundary and at the end.
    pub checkpoint: Option<PathBuf>,
    /// Log file, flushed at every checkpoint boundary. Appended to when
    /// resuming, created otherwise.
    pub log: Option<PathBuf>,
    /// Parameters and optimizer state to continue from.
    pub resume: Option<(ModelParams, AdamState)>,
    /// Stop after this step, as if the process had been interrupted.
    pub stop_after: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub adam: AdamState,
    pub log: TrainLog,
}

struct Sample {
    sharp: Plane,
    blurred: Plane,
    lap: Plane,
}

fn build_pool(data: &[TrainingPair], cfg: &TrainConfig) -> Result<Vec<Sample>, TrainError> {
    let mut pool = Vec::new();
    for pair in data {
        let patches = extract_patches(
            &pair.sharp,
            &pair.blurred,
            cfg.patch,
            PatchMode::Grid { stride: cfg.stride() },
            0,
        )?;
        for p in patches {
            let mut variants = vec![p.clone()];
            if cfg.augment {
                variants.extend(augment4(&p)?);
            }
            for v in variants {
                let lap = laplacian(&v.blurred)?;
                pool.push(Sample {
                    sharp: v.sharp,
                    blurred: v.blurred,
                    lap,
                });
            }
        }
    }
    Ok(pool)
}

struct LogSink {
    out: Option<BufWriter<File>>,
    pending: usize,
}

impl LogSink {
    fn open(path: Option<&Path>, append: bool) -> Result<Self, TrainError> {
        let Some(path) = path else {
            return Ok(LogSink { out: None, pending: 0 });
        };
        let existing = append && path.exists();
        let file = if existing {
            OpenOptions::new().append(true).open(path)?
        } else {
            File::create(path)?
        };
        let mut out = BufWriter::new(file);
        if !existing {
            writeln!(out, "{LOG_HEADER}")?;
            out.flush()?;
        }
        Ok(LogSink { out: Some(out), pending: 0 })
    }

    fn flush(&mut self, log: &TrainLog) -> Result<(), TrainError> {
        if let Some(out) = self.out.as_mut() {
            let start = log.records.len() - self.pending;
            TrainLog::write_rows(&log.records[start..], out)?;
            out.flush()?;
        }
        self.pending = 0;
        Ok(())
    }
}

/// Trains the network on `data` as described by `cfg`.
///
/// Every step draws `cfg.batch` samples with replacement from the patch
/// pool (patches plus their augmented copies) using a generator seeded from
/// `(cfg.seed, step)`. Parameters and Adam moments are rounded to `f32` at
/// every checkpoint boundary and after the final step, whether or not a
/// checkpoint file is written, so resumed and uninterrupted runs agree.
pub fn train(data: &[TrainingPair], cfg: &TrainConfig, options: TrainOptions) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let pool = build_pool(data, cfg)?;
    if pool.is_empty() {
        return Err(TrainError::EmptyDataset);
    }

    let resuming = options.resume.is_some();
    let (mut params, mut adam) = match options.resume {
        Some((params, mut adam)) => {
            if params.arch() != &cfg.arch {
                return Err(TrainError::Resume(format!(
                    "checkpoint architecture {:?} differs from config {:?}",
                    params.arch(),
                    cfg.arch
                )));
            }
            if adam.m.len() != params.tensors().len() {
                return Err(TrainError::Resume("optimizer state has the wrong tensor count".into()));
            }
            adam.config = cfg.adam;
            (params, adam)
        }
        None => {
            let params = ModelParams::init(cfg.arch, cfg.seed)?;
            let adam = AdamState::new(cfg.adam, params.tensors());
            (params, adam)
        }
    };

    let mut sink = LogSink::open(options.log.as_deref(), resuming)?;
    let mut log = TrainLog::default();
    let last = options.stop_after.map_or(cfg.steps, |s| s.min(cfg.steps));
    let started = Instant::now();

    let boundary = |params: &mut ModelParams, adam: &mut AdamState| -> Result<(), TrainError> {
        params.round_to_f32();
        adam.round_to_f32();
        if let Some(path) = options.checkpoint.as_deref() {
            save_checkpoint(path, params, Some(adam))?;
        }
        Ok(())
    };

    if adam.t >= cfg.steps {
        if !resuming {
            boundary(&mut params, &mut adam)?;
        }
        return Ok(TrainOutcome { params, adam, log });
    }

    for step in adam.t + 1..=last {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, Stream::Batch, step));
        let picks: Vec<&Sample> = (0..cfg.batch).map(|_| &pool[rng.random_range(0..pool.len())]).collect();
        let blurred = Plane::batch_tensor(&picks.iter().map(|s| &s.blurred).collect::<Vec<_>>());
        let lap = Plane::batch_tensor(&picks.iter().map(|s| &s.lap).collect::<Vec<_>>());
        let sharp = Plane::batch_tensor(&picks.iter().map(|s| &s.sharp).collect::<Vec<_>>());

        let outcome = forward_backward(&params, cfg, blurred, lap, sharp);
        let (wel, l2, el, grads) = match outcome {
            Ok(v) => v,
            Err(TensorError::NonFinite { .. }) => return Err(TrainError::NonFiniteLoss { step }),
            Err(e) => return Err(e.into()),
        };
        let lr = adam_step(params.tensors_mut(), &grads, &mut adam)?;
        log.records.push(TrainRecord {
            step,
            wel,
            l2,
            el,
            lr,
            seconds: started.elapsed().as_secs_f64(),
        });
        sink.pending += 1;

        if step % cfg.checkpoint_every == 0 || step == cfg.steps {
            boundary(&mut params, &mut adam)?;
            sink.flush(&log)?;
        }
    }
    Ok(TrainOutcome { params, adam, log })
}

type StepResult = (f64, f64, f64, Vec<Tensor>);

fn forward_backward(
    params: &ModelParams,
    cfg: &TrainConfig,
    blurred: Tensor,
    lap: Tensor,
    sharp: Tensor,
) -> Result<StepResult, TensorError> {
    let mut g = Graph::new();
    let vars = params.register(&mut g, true);
    let l = g.constant(blurred);
    let lap = g.constant(lap);
    let gt = g.constant(sharp);
    let pred = rdn_forward(&mut g, l, lap, &vars)?;
    let parts = wel_loss(&mut g, pred, gt, cfg.loss)?;
    let value = |v| g.value(v).item().expect("loss is scalar");
    let (wel, l2, el) = (value(parts.wel), value(parts.l2), value(parts.el));
    g.backward(parts.wel)?;
    let grads = vars
        .vars()
        .iter()
        .zip(params.tensors())
        .map(|(&v, t)| g.take_grad(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    Ok((wel, l2, el, grads))
}
