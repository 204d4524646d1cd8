use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{io_error, load_png, quantize_plane, save_png, to_luminance, DataError, DatasetManifest, Provenance};
use crate::imgproc::{motion_kernel, synthesize_blur, Image, Plane, MAX_KERNEL_LENGTH};
use crate::metrics::psnr;
use crate::seed::{derive, Stream};

#[derive(Clone, Debug, PartialEq)]
pub enum SceneSource {
    /// Generated scenes of the given size.
    Procedural { height: usize, width: usize },
    /// Existing PNG files, used in turn.
    Images(Vec<PathBuf>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub count: usize,
    pub seed: u64,
    pub kernel_min: usize,
    pub kernel_max: usize,
    pub angle_min: f64,
    pub angle_max: f64,
    pub noise_sigma: f64,
    pub source: SceneSource,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            count: 20,
            seed: 0,
            kernel_min: 5,
            kernel_max: 9,
            angle_min: 0.0,
            angle_max: 180.0,
            noise_sigma: 0.01,
            source: SceneSource::Procedural {
                height: 256,
                width: 256,
            },
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidArgument(m));
        if self.count == 0 {
            return bad("count must be at least 1".into());
        }
        if self.kernel_min == 0 || self.kernel_min > self.kernel_max || self.kernel_max > MAX_KERNEL_LENGTH {
            return bad(format!("kernel lengths must satisfy 1 <= min <= max <= {MAX_KERNEL_LENGTH}"));
        }
        if !(self.angle_min.is_finite() && self.angle_max.is_finite()) || self.angle_min > self.angle_max {
            return bad("angle range must be finite with min <= max".into());
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return bad("noise sigma must be finite and non-negative".into());
        }
        match &self.source {
            SceneSource::Procedural { height, width } if *height == 0 || *width == 0 => {
                bad("scene size must be positive".into())
            }
            SceneSource::Images(list) if list.is_empty() => bad("no base images given".into()),
            _ => Ok(()),
        }
    }
}

/// Signed distance from `p` to a shape, negative inside.
enum Shape {
    Disk { c: (f64, f64), r: f64 },
    Box { c: (f64, f64), half: (f64, f64), cos: f64, sin: f64 },
    Stroke { points: Vec<(f64, f64)>, half_width: f64 },
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

impl Shape {
    fn distance(&self, p: (f64, f64)) -> f64 {
        match self {
            Shape::Disk { c, r } => ((p.0 - c.0).powi(2) + (p.1 - c.1).powi(2)).sqrt() - r,
            Shape::Box { c, half, cos, sin } => {
                let (x, y) = (p.0 - c.0, p.1 - c.1);
                let (u, v) = ((x * cos + y * sin).abs() - half.0, (-x * sin + y * cos).abs() - half.1);
                let outside = (u.max(0.0).powi(2) + v.max(0.0).powi(2)).sqrt();
                outside + u.max(v).min(0.0)
            }
            Shape::Stroke { points, half_width } => {
                points
                    .windows(2)
                    .map(|w| segment_distance(p, w[0], w[1]))
                    .fold(f64::INFINITY, f64::min)
                    - half_width
            }
        }
    }

    /// Bounding box `(x0, y0, x1, y1)` including the anti-aliasing margin.
    fn bounds(&self) -> (f64, f64, f64, f64) {
        let (x0, y0, x1, y1) = match self {
            Shape::Disk { c, r } => (c.0 - r, c.1 - r, c.0 + r, c.1 + r),
            Shape::Box { c, half, .. } => {
                let r = half.0.hypot(half.1);
                (c.0 - r, c.1 - r, c.0 + r, c.1 + r)
            }
            Shape::Stroke { points, half_width } => {
                let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
                for p in points {
                    x0 = x0.min(p.0);
                    y0 = y0.min(p.1);
                    x1 = x1.max(p.0);
                    y1 = y1.max(p.1);
                }
                (x0 - half_width, y0 - half_width, x1 + half_width, y1 + half_width)
            }
        };
        (x0 - 1.0, y0 - 1.0, x1 + 1.0, y1 + 1.0)
    }
}

fn paint(img: &mut Plane, shape: &Shape, value: f64) {
    let (h, w) = img.dims();
    let (x0, y0, x1, y1) = shape.bounds();
    let clip = |v: f64, n: usize| v.floor().clamp(0.0, n as f64) as usize;
    for i in clip(y0, h)..clip(y1 + 1.0, h) {
        for j in clip(x0, w)..clip(x1 + 1.0, w) {
            let alpha = (0.5 - shape.distance((j as f64 + 0.5, i as f64 + 0.5))).clamp(0.0, 1.0);
            if alpha > 0.0 {
                let old = img.get(i, j);
                img.set(i, j, old + alpha * (value - old));
            }
        }
    }
}

/// A deterministic edge-rich test scene: a linear gradient background with
/// anti-aliased disks, rotated boxes and thin pen strokes on top. Values lie
/// in `[0.05, 0.95]`.
pub fn procedural_scene(height: usize, width: usize, seed: u64) -> Plane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hf, wf) = (height as f64, width as f64);
    let m = hf.min(wf);

    let base = rng.random_range(0.25..0.75);
    let slope = rng.random_range(-0.3..0.3);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let diag = hf.hypot(wf).max(1.0);
    let mut img = Plane::from_fn(height, width, |i, j| {
        let t = ((j as f64 - wf / 2.0) * phi.cos() + (i as f64 - hf / 2.0) * phi.sin()) / diag;
        (base + slope * t).clamp(0.05, 0.95)
    });

    let count = (height * width / 1500).clamp(6, 60);
    for _ in 0..count {
        let c = (rng.random_range(0.0..wf), rng.random_range(0.0..hf));
        let size = m * rng.random_range(0.04..0.2);
        let shape = match rng.random_range(0..3) {
            0 => Shape::Disk { c, r: size.max(1.5) },
            1 => {
                let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
                Shape::Box {
                    c,
                    half: (size.max(1.5), (size * rng.random_range(0.3..1.0)).max(1.0)),
                    cos: theta.cos(),
                    sin: theta.sin(),
                }
            }
            _ => {
                let n = rng.random_range(2..=4);
                let span = size.max(3.0);
                let points = (0..=n)
                    .map(|_| {
                        (
                            c.0 + rng.random_range(-span..span),
                            c.1 + rng.random_range(-span..span),
                        )
                    })
                    .collect();
                Shape::Stroke {
                    points,
                    half_width: rng.random_range(0.5..1.5),
                }
            }
        };
        let value = rng.random_range(0.05..0.95);
        paint(&mut img, &shape, value);
    }
    img
}

/// Re-creates the stored blurred image of a generated pair from its sharp
/// image and provenance, including the 8-bit quantization.
pub fn regenerate_blur(sharp: &Plane, p: &Provenance) -> Result<Plane, DataError> {
    let kernel = motion_kernel(p.kernel_len, p.kernel_angle)?;
    let blurred = synthesize_blur(sharp, &kernel, p.noise_sigma, p.seed)?;
    Ok(quantize_plane(&blurred))
}

/// Writes `count` sharp/blurred pairs and a manifest under `out`.
///
/// Item `i` draws its scene, kernel and noise from seeds derived from
/// `(cfg.seed, i)`, so any item can be regenerated on its own. Blur is
/// applied to the 8-bit quantized sharp image so that the files on disk
/// satisfy `blur = regenerate_blur(sharp, provenance)` exactly.
pub fn generate_synthetic_dataset(out: &Path, cfg: &SynthConfig) -> Result<DatasetManifest, DataError> {
    cfg.validate()?;
    for sub in ["sharp", "blur"] {
        let dir = out.join(sub);
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    }
    let bases = match &cfg.source {
        SceneSource::Images(paths) => Some(
            paths
                .iter()
                .map(|p| load_png(p).and_then(|img| to_luminance(&img)))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        SceneSource::Procedural { .. } => None,
    };

    let digits = cfg.count.saturating_sub(1).to_string().len().max(5);
    let manifest = DatasetManifest::new(out, Vec::new());
    let mut entries = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let id = format!("{i:0digits$}");
        let scene = match (&bases, &cfg.source) {
            (Some(list), _) => list[i % list.len()].clone(),
            (None, SceneSource::Procedural { height, width }) => {
                procedural_scene(*height, *width, derive(cfg.seed, Stream::Scene, i as u64))
            }
            _ => unreachable!(),
        };
        let sharp = quantize_plane(&scene);

        let mut krng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, Stream::Kernel, i as u64));
        let kernel_len = krng.random_range(cfg.kernel_min..=cfg.kernel_max);
        let kernel_angle = if cfg.angle_min < cfg.angle_max {
            (krng.random_range(cfg.angle_min..cfg.angle_max) * 100.0).round() / 100.0
        } else {
            cfg.angle_min
        };
        let provenance = Provenance {
            kernel_len,
            kernel_angle,
            noise_sigma: cfg.noise_sigma,
            seed: derive(cfg.seed, Stream::Noise, i as u64),
        };
        let blurred = regenerate_blur(&sharp, &provenance)?;
        if psnr(&blurred, &sharp, 1.0).map_err(|e| DataError::InvalidArgument(e.to_string()))? >= 99.0 {
            return Err(DataError::Degenerate(id));
        }

        let e = manifest.entry(&id, Some(provenance));
        save_png(&Image::luminance(sharp), &e.sharp)?;
        save_png(&Image::luminance(blurred), &e.blurred)?;
        entries.push(e);
    }
    let manifest = DatasetManifest::new(out, entries);
    manifest.write()?;
    Ok(manifest)
}
