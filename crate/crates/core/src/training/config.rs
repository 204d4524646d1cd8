use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::{AdamConfig, LossWeights};
use crate::model::ArchConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    Value { line: usize, key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
}

/// Everything that determines a training run.
///
/// File keys and defaults:
///
/// | key | default |
/// |---|---|
/// | `num_rdbs`, `convs_per_rdb`, `growth`, `base_channels` | 8, 6, 32, 64 |
/// | `w_l2`, `w_el` | 1.0, 0.05 |
/// | `lr`, `beta1`, `beta2`, `epsilon`, `decay` | 1e-4, 0.9, 0.999, 1e-8, 5e-5 |
/// | `patch` | 256 |
/// | `patch_stride` | equal to `patch` |
/// | `batch` | 4 |
/// | `steps` | 1000 |
/// | `seed` | 0 |
/// | `augment` | true |
/// | `checkpoint_every` | 100 |
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub arch: ArchConfig,
    pub loss: LossWeights,
    pub adam: AdamConfig,
    pub patch: usize,
    /// Grid stride for patch extraction; `None` means non-overlapping.
    pub patch_stride: Option<usize>,
    pub batch: usize,
    pub steps: u64,
    pub seed: u64,
    pub augment: bool,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: ArchConfig::default(),
            loss: LossWeights::default(),
            adam: AdamConfig::default(),
            patch: 256,
            patch_stride: None,
            batch: 4,
            steps: 1000,
            seed: 0,
            augment: true,
            checkpoint_every: 100,
        }
    }
}

const KEYS: &[&str] = &[
    "num_rdbs",
    "convs_per_rdb",
    "growth",
    "base_channels",
    "w_l2",
    "w_el",
    "lr",
    "beta1",
    "beta2",
    "epsilon",
    "decay",
    "patch",
    "patch_stride",
    "batch",
    "steps",
    "seed",
    "augment",
    "checkpoint_every",
];

impl TrainConfig {
    pub fn stride(&self) -> usize {
        self.patch_stride.unwrap_or(self.patch)
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are
    /// ignored; keys not listed are errors. Unset keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = TrainConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                text: raw.trim().to_string(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                return Err(ConfigError::UnknownKey { line, key: key.to_string() });
            };
            if seen.contains(&known) {
                return Err(ConfigError::Duplicate { line, key: key.to_string() });
            }
            seen.push(known);
            cfg.set(line, known, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::Value {
            line,
            key: key.to_string(),
            value: value.to_string(),
        };
        let int = || value.parse::<usize>().map_err(|_| bad());
        let u64v = || value.parse::<u64>().map_err(|_| bad());
        let float = || match value.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(bad()),
        };
        match key {
            "num_rdbs" => self.arch.num_rdbs = int()?,
            "convs_per_rdb" => self.arch.convs_per_rdb = int()?,
            "growth" => self.arch.growth = int()?,
            "base_channels" => self.arch.base_channels = int()?,
            "w_l2" => self.loss.w_l2 = float()?,
            "w_el" => self.loss.w_el = float()?,
            "lr" => self.adam.lr = float()?,
            "beta1" => self.adam.beta1 = float()?,
            "beta2" => self.adam.beta2 = float()?,
            "epsilon" => self.adam.epsilon = float()?,
            "decay" => self.adam.decay = float()?,
            "patch" => self.patch = int()?,
            "patch_stride" => self.patch_stride = Some(int()?),
            "batch" => self.batch = int()?,
            "steps" => self.steps = u64v()?,
            "seed" => self.seed = u64v()?,
            "augment" => {
                self.augment = match value {
                    "true" | "1" | "on" | "yes" => true,
                    "false" | "0" | "off" | "no" => false,
                    _ => return Err(bad()),
                }
            }
            "checkpoint_every" => self.checkpoint_every = u64v()?,
            _ => unreachable!("key list and setter disagree"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if let Err(e) = self.arch.validate() {
            return Err(ConfigError::Invalid(e.to_string()));
        }
        if !self.loss.is_valid() {
            return invalid("w_l2 and w_el must be non-negative and not both zero");
        }
        if !self.adam.is_valid() {
            return invalid("Adam hyperparameters out of range");
        }
        if self.patch == 0 || self.patch_stride == Some(0) {
            return invalid("patch and patch_stride must be positive");
        }
        if self.batch == 0 {
            return invalid("batch must be positive");
        }
        if self.checkpoint_every == 0 {
            return invalid("checkpoint_every must be positive");
        }
        Ok(())
    }

    /// The configuration as a parseable key=value text, every key present.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let a = &self.arch;
        let _ = writeln!(s, "num_rdbs = {}", a.num_rdbs);
        let _ = writeln!(s, "convs_per_rdb = {}", a.convs_per_rdb);
        let _ = writeln!(s, "growth = {}", a.growth);
        let _ = writeln!(s, "base_channels = {}", a.base_channels);
        let _ = writeln!(s, "w_l2 = {:?}", self.loss.w_l2);
        let _ = writeln!(s, "w_el = {:?}", self.loss.w_el);
        let _ = writeln!(s, "lr = {:?}", self.adam.lr);
        let _ = writeln!(s, "beta1 = {:?}", self.adam.beta1);
        let _ = writeln!(s, "beta2 = {:?}", self.adam.beta2);
        let _ = writeln!(s, "epsilon = {:?}", self.adam.epsilon);
        let _ = writeln!(s, "decay = {:?}", self.adam.decay);
        let _ = writeln!(s, "patch = {}", self.patch);
        let _ = writeln!(s, "patch_stride = {}", self.stride());
        let _ = writeln!(s, "batch = {}", self.batch);
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "augment = {}", self.augment);
        let _ = writeln!(s, "checkpoint_every = {}", self.checkpoint_every);
        s
    }
}
