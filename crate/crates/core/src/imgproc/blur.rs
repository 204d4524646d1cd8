//! Motion kernels and the degradation `y = clamp((x * k) + n)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ImgError, Plane};

pub const MAX_KERNEL_LENGTH: usize = 31;

/// Normalized, non-negative point spread function with odd side lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct BlurKernel {
    height: usize,
    width: usize,
    taps: Vec<f64>,
    /// `(length px, angle deg)` when built by [`motion_kernel`].
    motion: Option<(usize, f64)>,
}

impl BlurKernel {
    pub fn new(height: usize, width: usize, taps: Vec<f64>) -> Result<Self, ImgError> {
        let sum: f64 = taps.iter().sum();
        if height % 2 == 0
            || width % 2 == 0
            || taps.len() != height * width
            || taps.iter().any(|&t| !(t >= 0.0) || !t.is_finite())
            || (sum - 1.0).abs() > 1e-12
        {
            return Err(ImgError::InvalidKernel);
        }
        Ok(BlurKernel {
            height,
            width,
            taps,
            motion: None,
        })
    }

    pub fn identity() -> Self {
        BlurKernel {
            height: 1,
            width: 1,
            taps: vec![1.0],
            motion: None,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn tap(&self, i: usize, j: usize) -> f64 {
        self.taps[i * self.width + j]
    }

    pub fn motion(&self) -> Option<(usize, f64)> {
        self.motion
    }

    pub fn transposed(&self) -> BlurKernel {
        let mut taps = Vec::with_capacity(self.taps.len());
        for j in 0..self.width {
            for i in 0..self.height {
                taps.push(self.tap(i, j));
            }
        }
        BlurKernel {
            height: self.width,
            width: self.height,
            taps,
            motion: None,
        }
    }

    /// True convolution (kernel flipped) with reflect-101 borders, no noise
    /// and no clamping.
    pub fn apply(&self, img: &Plane) -> Plane {
        let (h, w) = img.dims();
        let (cy, cx) = ((self.height / 2) as isize, (self.width / 2) as isize);
        let mut out = Plane::zeros(h, w);
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for u in 0..self.height {
                    let si = reflect(i as isize - (u as isize - cy), h);
                    for v in 0..self.width {
                        let t = self.tap(u, v);
                        if t != 0.0 {
                            let sj = reflect(j as isize - (v as isize - cx), w);
                            acc += t * img.get(si, sj);
                        }
                    }
                }
                out.set(i, j, acc);
            }
        }
        out
    }
}

/// Reflect-101 (`dcb|abcd|cba`) index into `0..n`.
fn reflect(mut i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Length of the part of segment `p0 -> p0 + d` inside the axis-aligned box
/// (Liang-Barsky clipping).
fn clipped_length(p0: [f64; 2], d: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> f64 {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for k in 0..2 {
        if d[k] == 0.0 {
            if p0[k] < lo[k] || p0[k] > hi[k] {
                return 0.0;
            }
            continue;
        }
        let a = (lo[k] - p0[k]) / d[k];
        let b = (hi[k] - p0[k]) / d[k];
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
        if t1 <= t0 {
            return 0.0;
        }
    }
    (t1 - t0) * (d[0] * d[0] + d[1] * d[1]).sqrt()
}

/// Anti-aliased straight-line PSF of `length` pixels at `angle_deg`
/// (counter-clockwise from the +x axis, image rows pointing down), centered
/// on the smallest odd grid. Each tap is the length of segment inside that
/// pixel, normalized to sum 1.
pub fn motion_kernel(length: usize, angle_deg: f64) -> Result<BlurKernel, ImgError> {
    if length == 0 || length > MAX_KERNEL_LENGTH {
        return Err(ImgError::KernelLength {
            got: length,
            max: MAX_KERNEL_LENGTH,
        });
    }
    let snap = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let mut dir = [snap(cos), snap(-sin)];
    // The segment is symmetric about the origin; orient it canonically so a
    // kernel and its 90-degree counterpart are computed with mirrored
    // arithmetic.
    if dir[1] < 0.0 || (dir[1] == 0.0 && dir[0] < 0.0) {
        dir = [-dir[0], -dir[1]];
    }
    let len = length as f64;
    let half = |c: f64| ((c.abs() * len / 2.0 - 0.5).ceil().max(0.0)) as usize;
    let (hx, hy) = (half(dir[0]), half(dir[1]));
    let (w, h) = (2 * hx + 1, 2 * hy + 1);
    let p0 = [-dir[0] * len / 2.0, -dir[1] * len / 2.0];
    let d = [dir[0] * len, dir[1] * len];

    let mut taps = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let x = c as f64 - hx as f64;
            let y = r as f64 - hy as f64;
            taps[r * w + c] = clipped_length(p0, d, [x - 0.5, y - 0.5], [x + 0.5, y + 0.5]);
        }
    }
    let (taps, h, w) = trim_zero_border(taps, h, w);
    let sum: f64 = taps.iter().sum();
    Ok(BlurKernel {
        height: h,
        width: w,
        taps: taps.into_iter().map(|t| t / sum).collect(),
        motion: Some((length, angle_deg)),
    })
}

/// Drops all-zero outer rows/columns in symmetric pairs, keeping sides odd.
fn trim_zero_border(mut taps: Vec<f64>, mut h: usize, mut w: usize) -> (Vec<f64>, usize, usize) {
    loop {
        let row_zero = |taps: &[f64], r: usize| taps[r * w..(r + 1) * w].iter().all(|&t| t == 0.0);
        if h > 1 && row_zero(&taps, 0) && row_zero(&taps, h - 1) {
            taps = taps[w..(h - 1) * w].to_vec();
            h -= 2;
            continue;
        }
        let col_zero = |taps: &[f64], c: usize| (0..h).all(|r| taps[r * w + c] == 0.0);
        if w > 1 && col_zero(&taps, 0) && col_zero(&taps, w - 1) {
            taps = (0..h).flat_map(|r| taps[r * w + 1..(r + 1) * w - 1].to_vec()).collect();
            w -= 2;
            continue;
        }
        return (taps, h, w);
    }
}

/// Blurs `sharp` with `kernel`, adds seeded i.i.d. Gaussian noise of
/// standard deviation `noise_sigma` and clamps to `[0, 1]`.
pub fn synthesize_blur(sharp: &Plane, kernel: &BlurKernel, noise_sigma: f64, seed: u64) -> Result<Plane, ImgError> {
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(ImgError::NoiseSigma(noise_sigma));
    }
    let mut out = kernel.apply(sharp);
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma).expect("valid sigma");
        for v in out.data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(out.clamp01())
}
