//! Dense 4-D tensors and a reverse-mode differentiation graph.
//!
//! A [`Tensor`] is a plain value: shape plus row-major `(b, c, h, w)` data.
//! Gradient tracking lives on the [`Graph`], which records every operation
//! applied to its [`Var`] handles and replays them in reverse on
//! [`Graph::backward`].
//!
//! There is no broadcasting. Binary operations require identical shapes and
//! convolution bias is a separate per-output-channel tensor.

mod conv;
mod graph;

use std::fmt;

use thiserror::Error;

pub use graph::{Graph, Var};

pub use conv::conv2d_forward;

/// Tensor dimensions as `(batch, channels, height, width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape(pub [usize; 4]);

impl Shape {
    pub const fn new(batch: usize, channels: usize, height: usize, width: usize) -> Self {
        Shape([batch, channels, height, width])
    }

    pub const fn scalar() -> Self {
        Shape([1, 1, 1, 1])
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn batch(&self) -> usize {
        self.0[0]
    }

    pub fn channels(&self) -> usize {
        self.0[1]
    }

    pub fn height(&self) -> usize {
        self.0[2]
    }

    pub fn width(&self) -> usize {
        self.0[3]
    }

    /// Number of elements in one `(h, w)` plane.
    pub fn plane(&self) -> usize {
        self.0[2] * self.0[3]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [b, c, h, w] = self.0;
        write!(f, "({b}, {c}, {h}, {w})")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("data length {len} does not match shape {shape}")]
    DataLength { shape: Shape, len: usize },
    #[error("tensor data contains a non-finite value")]
    NonFiniteData,
    #[error("{op}: shape mismatch {lhs} vs {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },
    #[error("conv2d: input has {input} channels but weight expects {weight}")]
    ChannelMismatch { input: usize, weight: usize },
    #[error("conv2d: bias has shape {bias}, expected ({out}, 1, 1, 1)")]
    BiasMismatch { bias: Shape, out: usize },
    #[error("conv2d: kernel {kh}x{kw} must have odd side lengths")]
    EvenKernel { kh: usize, kw: usize },
    #[error("conv2d: empty output for input {input}, kernel {kh}x{kw}, padding {padding}")]
    EmptyOutput {
        input: Shape,
        kh: usize,
        kw: usize,
        padding: usize,
    },
    #[error("concat_channels: at least one input is required")]
    EmptyConcat,
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward: loss must hold a single element, got shape {0}")]
    NotScalar(Shape),
    #[error("backward: graph has already been consumed")]
    GraphConsumed,
}

/// Dense 64-bit tensor. All stored values are finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self, TensorError> {
        if data.len() != shape.numel() {
            return Err(TensorError::DataLength {
                shape,
                len: data.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFiniteData);
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.numel()],
        }
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        assert!(value.is_finite(), "fill value must be finite");
        Tensor {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::full(Shape::scalar(), value)
    }

    /// Builds a `(1, 1, 1, n)` tensor from a slice.
    pub fn from_row(values: &[f64]) -> Result<Self, TensorError> {
        Self::new(Shape::new(1, 1, 1, values.len()), values.to_vec())
    }

    /// Builds a `(len, 1, 1, 1)` tensor, the layout used for conv biases.
    pub fn bias(values: &[f64]) -> Result<Self, TensorError> {
        Self::new(Shape::new(values.len(), 1, 1, 1), values.to_vec())
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable view of the values. Callers must keep them finite.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn index(&self, b: usize, c: usize, h: usize, w: usize) -> usize {
        let [_, cs, hs, ws] = self.shape.0;
        ((b * cs + c) * hs + h) * ws + w
    }

    pub fn get(&self, b: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(b, c, h, w)]
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    /// Contiguous `(h, w)` plane at batch `b`, channel `c`.
    pub fn plane(&self, b: usize, c: usize) -> &[f64] {
        let n = self.shape.plane();
        let start = (b * self.shape.channels() + c) * n;
        &self.data[start..start + n]
    }

    /// Copies batch element `b` into a new `(1, c, h, w)` tensor.
    pub fn batch_item(&self, b: usize) -> Tensor {
        let per = self.shape.channels() * self.shape.plane();
        Tensor {
            shape: Shape::new(1, self.shape.channels(), self.shape.height(), self.shape.width()),
            data: self.data[b * per..(b + 1) * per].to_vec(),
        }
    }

    /// Stacks same-shaped `(1, c, h, w)` tensors along the batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor, TensorError> {
        let first = items.first().ok_or(TensorError::EmptyConcat)?;
        let s = first.shape;
        let mut data = Vec::with_capacity(s.numel() * items.len());
        for t in items {
            if t.shape != s {
                return Err(TensorError::ShapeMismatch {
                    op: "stack",
                    lhs: s,
                    rhs: t.shape,
                });
            }
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            shape: Shape::new(s.batch() * items.len(), s.channels(), s.height(), s.width()),
            data,
        })
    }

    /// Rounds every value through `f32`, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }

    pub(crate) fn from_parts(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.numel(), data.len());
        Tensor { shape, data }
    }
}

/// Forward differences of one `h x w` plane: `gx[i][j] = p[i][j+1] - p[i][j]`
/// with the last column zero, and `gy` the same along rows.
pub(crate) fn forward_differences(plane: &[f64], h: usize, w: usize, gx: &mut [f64], gy: &mut [f64]) {
    for i in 0..h {
        let row = &plane[i * w..(i + 1) * w];
        for j in 0..w {
            gx[i * w + j] = if j + 1 < w { row[j + 1] - row[j] } else { 0.0 };
            gy[i * w + j] = if i + 1 < h {
                plane[(i + 1) * w + j] - row[j]
            } else {
                0.0
            };
        }
    }
}

/// Adjoint of [`forward_differences`], accumulated into `out`.
pub(crate) fn forward_differences_adjoint(gx: &[f64], gy: &[f64], h: usize, w: usize, out: &mut [f64]) {
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            let mut acc = 0.0;
            if j + 1 < w {
                acc -= gx[k];
            }
            if j >= 1 {
                acc += gx[k - 1];
            }
            if i + 1 < h {
                acc -= gy[k];
            }
            if i >= 1 {
                acc += gy[k - w];
            }
            out[k] += acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_bad_length_and_non_finite() {
        let s = Shape::new(1, 1, 2, 2);
        assert!(matches!(
            Tensor::new(s, vec![0.0; 3]),
            Err(TensorError::DataLength { len: 3, .. })
        ));
        assert_eq!(
            Tensor::new(s, vec![0.0, 1.0, f64::NAN, 2.0]),
            Err(TensorError::NonFiniteData)
        );
    }

    #[test]
    fn indexing_is_row_major_bchw() {
        let t = Tensor::new(Shape::new(2, 3, 4, 5), (0..120).map(f64::from).collect()).unwrap();
        assert_eq!(t.get(1, 2, 3, 4), 119.0);
        assert_eq!(t.get(0, 1, 0, 0), 20.0);
        assert_eq!(t.plane(1, 0)[0], 60.0);
    }

    #[test]
    fn stack_and_batch_item_invert() {
        let a = Tensor::new(Shape::new(1, 2, 1, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(Shape::new(1, 2, 1, 2), vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let s = Tensor::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), Shape::new(2, 2, 1, 2));
        assert_eq!(s.batch_item(0), a);
        assert_eq!(s.batch_item(1), b);
    }

    #[test]
    fn forward_difference_adjoint_identity() {
        // <D x, y> == <x, D^T y>
        let (h, w) = (3, 4);
        let x: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 - 1.5).collect();
        let yx: Vec<f64> = (0..12).map(|i| ((i * 3) % 7) as f64 * 0.25).collect();
        let yy: Vec<f64> = (0..12).map(|i| ((i * 5) % 4) as f64 - 0.5).collect();
        let (mut gx, mut gy) = (vec![0.0; 12], vec![0.0; 12]);
        forward_differences(&x, h, w, &mut gx, &mut gy);
        let lhs: f64 = gx.iter().zip(&yx).chain(gy.iter().zip(&yy)).map(|(a, b)| a * b).sum();
        let mut adj = vec![0.0; 12];
        forward_differences_adjoint(&yx, &yy, h, w, &mut adj);
        let rhs: f64 = x.iter().zip(&adj).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
