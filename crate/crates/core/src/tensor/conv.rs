//! Zero-padded 2-D cross-correlation via im2col and GEMM.
//!
//! The kernel is not flipped: `out[b,o,y,x] = bias[o] + sum_{i,ky,kx}
//! in[b,i,y+ky-p,x+kx-p] * w[o,i,ky,kx]`, with out-of-range input reads as 0.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, ArrayView2, ArrayViewMut2};

use super::{Shape, Tensor, TensorError};

#[derive(Clone, Copy, Debug)]
pub(crate) struct Geometry {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Geometry {
    pub fn new(input: Shape, weight: Shape, bias: Shape, pad: usize) -> Result<Self, TensorError> {
        let [batch, cin, h, w] = input.0;
        let [cout, wcin, kh, kw] = weight.0;
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(TensorError::EvenKernel { kh, kw });
        }
        if wcin != cin {
            return Err(TensorError::ChannelMismatch {
                input: cin,
                weight: wcin,
            });
        }
        if bias != Shape::new(cout, 1, 1, 1) {
            return Err(TensorError::BiasMismatch { bias, out: cout });
        }
        let empty = TensorError::EmptyOutput {
            input,
            kh,
            kw,
            padding: pad,
        };
        let oh = (h + 2 * pad).checked_sub(kh - 1).filter(|&v| v > 0).ok_or(empty.clone())?;
        let ow = (w + 2 * pad).checked_sub(kw - 1).filter(|&v| v > 0).ok_or(empty)?;
        if batch == 0 || cout == 0 {
            return Err(TensorError::EmptyOutput {
                input,
                kh,
                kw,
                padding: pad,
            });
        }
        Ok(Geometry {
            batch,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            pad,
            oh,
            ow,
        })
    }

    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn n(&self) -> usize {
        self.oh * self.ow
    }

    fn out_shape(&self) -> Shape {
        Shape::new(self.batch, self.cout, self.oh, self.ow)
    }

    /// 1x1 without padding reads the input directly as the column matrix.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.pad == 0
    }

    /// Output columns `ox` whose input column `ox + kx - pad` is in range.
    fn valid_ox(&self, kx: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kx);
        let hi = (self.w + self.pad).saturating_sub(kx).min(self.ow);
        (lo, hi.max(lo))
    }
}

/// Column-matrix elements per band; bounds im2col memory on large images.
const BAND_ELEMENTS: usize = 1 << 21;

/// Output rows `[oy0, oy1)` processed together.
fn bands(g: &Geometry) -> impl Iterator<Item = (usize, usize)> {
    let rows = (BAND_ELEMENTS / (g.k() * g.ow).max(1)).clamp(1, g.oh);
    let oh = g.oh;
    (0..oh).step_by(rows).map(move |oy0| (oy0, (oy0 + rows).min(oh)))
}

/// Fills `cols` (`k x (oy1 - oy0) * ow`) with the input windows of output
/// rows `[oy0, oy1)`.
fn im2col(g: &Geometry, input: &[f64], (oy0, oy1): (usize, usize), cols: &mut [f64]) {
    let nb = (oy1 - oy0) * g.ow;
    for ci in 0..g.cin {
        let plane = &input[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = ((ci * g.kh + ky) * g.kw + kx) * nb;
                let (lo, hi) = g.valid_ox(kx);
                for oy in oy0..oy1 {
                    let at = row + (oy - oy0) * g.ow;
                    let dst = &mut cols[at..at + g.ow];
                    let iy = (oy + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize || lo == hi {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    dst[..lo].fill(0.0);
                    dst[hi..].fill(0.0);
                    let ix0 = lo + kx - g.pad;
                    dst[lo..hi].copy_from_slice(&src[ix0..ix0 + (hi - lo)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`] for the same band.
fn col2im_add(g: &Geometry, cols: &[f64], (oy0, oy1): (usize, usize), grad_in: &mut [f64]) {
    let nb = (oy1 - oy0) * g.ow;
    for ci in 0..g.cin {
        let plane = &mut grad_in[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = ((ci * g.kh + ky) * g.kw + kx) * nb;
                let (lo, hi) = g.valid_ox(kx);
                if lo == hi {
                    continue;
                }
                for oy in oy0..oy1 {
                    let iy = (oy + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let at = row + (oy - oy0) * g.ow;
                    let src = &cols[at + lo..at + hi];
                    let ix0 = lo + kx - g.pad;
                    let dst = &mut plane[iy as usize * g.w + ix0..iy as usize * g.w + ix0 + (hi - lo)];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
}

fn view(data: &[f64], rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), data).expect("contiguous matrix view")
}

fn view_mut(data: &mut [f64], rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("contiguous matrix view")
}

/// Zero-padded cross-correlation outside any graph. `bias` has shape
/// `(cout, 1, 1, 1)`.
pub fn conv2d_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    pad: usize,
) -> Result<Tensor, TensorError> {
    let g = Geometry::new(input.shape(), weight.shape(), bias.shape(), pad)?;
    let (k, n) = (g.k(), g.n());
    let in_per = g.cin * g.h * g.w;
    let out_per = g.cout * n;
    let mut out = vec![0.0; g.batch * out_per];
    let w = view(weight.data(), g.cout, k);
    let mut cols = Vec::new();

    for b in 0..g.batch {
        let x = &input.data()[b * in_per..(b + 1) * in_per];
        let dst = &mut out[b * out_per..(b + 1) * out_per];
        for (o, chunk) in dst.chunks_exact_mut(n).enumerate() {
            chunk.fill(bias.data()[o]);
        }
        let mut dst = view_mut(dst, g.cout, n);
        if g.is_pointwise() {
            general_mat_mul(1.0, &w, &view(x, k, n), 1.0, &mut dst);
            continue;
        }
        for band in bands(&g) {
            let (c0, c1) = (band.0 * g.ow, band.1 * g.ow);
            cols.resize(k * (c1 - c0), 0.0);
            im2col(&g, x, band, &mut cols);
            general_mat_mul(1.0, &w, &view(&cols, k, c1 - c0), 1.0, &mut dst.slice_mut(s![.., c0..c1]));
        }
    }
    Ok(Tensor::from_parts(g.out_shape(), out))
}

pub(crate) struct ConvGrads {
    pub input: Option<Tensor>,
    pub weight: Option<Tensor>,
    pub bias: Option<Tensor>,
}

pub(crate) fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    bias_shape: Shape,
    pad: usize,
    grad_out: &Tensor,
    want: [bool; 3],
) -> ConvGrads {
    let g = Geometry::new(input.shape(), weight.shape(), bias_shape, pad)
        .expect("geometry was validated on the forward pass");
    let (k, n) = (g.k(), g.n());
    let in_per = g.cin * g.h * g.w;
    let out_per = g.cout * n;
    let [want_in, want_w, want_b] = want;

    let mut grad_in = want_in.then(|| vec![0.0; input.numel()]);
    let mut grad_w = want_w.then(|| vec![0.0; weight.numel()]);
    let grad_b = want_b.then(|| {
        let mut gb = vec![0.0; g.cout];
        for b in 0..g.batch {
            let go = &grad_out.data()[b * out_per..(b + 1) * out_per];
            for (o, chunk) in go.chunks_exact(n).enumerate() {
                gb[o] += chunk.iter().sum::<f64>();
            }
        }
        gb
    });

    let w = view(weight.data(), g.cout, k);
    let mut cols = Vec::new();
    for b in 0..g.batch {
        let go = view(&grad_out.data()[b * out_per..(b + 1) * out_per], g.cout, n);
        let x = &input.data()[b * in_per..(b + 1) * in_per];
        if g.is_pointwise() {
            if let Some(gw) = grad_w.as_mut() {
                general_mat_mul(1.0, &go, &view(x, k, n).t(), 1.0, &mut view_mut(gw, g.cout, k));
            }
            if let Some(gi) = grad_in.as_mut() {
                let dst = &mut gi[b * in_per..(b + 1) * in_per];
                general_mat_mul(1.0, &w.t(), &go, 1.0, &mut view_mut(dst, k, n));
            }
            continue;
        }
        for band in bands(&g) {
            let (c0, c1) = (band.0 * g.ow, band.1 * g.ow);
            let go_band = go.slice(s![.., c0..c1]);
            cols.resize(k * (c1 - c0), 0.0);
            if let Some(gw) = grad_w.as_mut() {
                im2col(&g, x, band, &mut cols);
                let col_view = view(&cols, k, c1 - c0);
                general_mat_mul(1.0, &go_band, &col_view.t(), 1.0, &mut view_mut(gw, g.cout, k));
            }
            if let Some(gi) = grad_in.as_mut() {
                let dst = &mut gi[b * in_per..(b + 1) * in_per];
                general_mat_mul(1.0, &w.t(), &go_band, 0.0, &mut view_mut(&mut cols, k, c1 - c0));
                col2im_add(&g, &cols, band, dst);
            }
        }
    }

    ConvGrads {
        input: grad_in.map(|d| Tensor::from_parts(input.shape(), d)),
        weight: grad_w.map(|d| Tensor::from_parts(weight.shape(), d)),
        bias: grad_b.map(|d| Tensor::from_parts(bias_shape, d)),
    }
}
