//! Deterministic, non-differentiable image preprocessing.

mod blur;
mod color;
mod filter;
mod patch;

use thiserror::Error;

use crate::tensor::{Shape, Tensor};

pub use blur::{motion_kernel, synthesize_blur, BlurKernel, MAX_KERNEL_LENGTH};
pub use color::{lab_recompose, rgb_to_lab, rgb_to_luminance};
pub use filter::{laplacian, laplacian_weight, spatial_gradient, LAPLACIAN_KERNEL};
pub use patch::{augment4, extract_patches, PatchMode, PatchPair};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImgError {
    #[error("expected {expected} channel(s), got {got}")]
    ChannelCount { expected: usize, got: usize },
    #[error("expected color space {expected:?}, got {got:?}")]
    ColorSpace { expected: ColorSpace, got: ColorSpace },
    #[error("image is empty")]
    Empty,
    #[error("plane sizes differ: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("motion kernel length must be in 1..={max}, got {got}")]
    KernelLength { got: usize, max: usize },
    #[error("blur kernel taps must be non-negative with odd side lengths summing to 1")]
    InvalidKernel,
    #[error("noise sigma must be finite and non-negative, got {0}")]
    NoiseSigma(f64),
    #[error("image {height}x{width} is smaller than patch {patch}")]
    SmallerThanPatch { height: usize, width: usize, patch: usize },
    #[error("patch size and stride must be positive")]
    PatchGeometry,
    #[error("rotation requires a square patch, got {0}x{1}")]
    NotSquare(usize, usize),
}

/// A single 2-D channel of 64-bit samples, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), height * width, "plane data length");
        Plane { height, width, data }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Plane {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Plane { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.width + j] = v;
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Plane {
        Plane::from_fn(height, width, |i, j| self.get(top + i, left + j))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp01(&self) -> Plane {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Mirror left-right.
    pub fn flip_x(&self) -> Plane {
        Plane::from_fn(self.height, self.width, |i, j| self.get(i, self.width - 1 - j))
    }

    /// Mirror top-bottom.
    pub fn flip_y(&self) -> Plane {
        Plane::from_fn(self.height, self.width, |i, j| self.get(self.height - 1 - i, j))
    }

    /// Rotate 90 degrees counter-clockwise.
    pub fn rot90(&self) -> Plane {
        Plane::from_fn(self.width, self.height, |i, j| self.get(j, self.width - 1 - i))
    }

    /// Rotate 270 degrees counter-clockwise (90 clockwise).
    pub fn rot270(&self) -> Plane {
        Plane::from_fn(self.width, self.height, |i, j| self.get(self.height - 1 - j, i))
    }

    /// `(1, 1, h, w)` tensor view of the plane.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(Shape::new(1, 1, self.height, self.width), self.data.clone())
            .expect("plane values are finite")
    }

    /// Stacks planes of equal size into a `(n, 1, h, w)` batch.
    pub fn batch_tensor(planes: &[&Plane]) -> Tensor {
        let (h, w) = planes[0].dims();
        let mut data = Vec::with_capacity(planes.len() * h * w);
        for p in planes {
            assert_eq!(p.dims(), (h, w), "batch planes must share dimensions");
            data.extend_from_slice(&p.data);
        }
        Tensor::new(Shape::new(planes.len(), 1, h, w), data).expect("plane values are finite")
    }

    /// Plane `(b, c)` of a tensor.
    pub fn from_tensor(t: &Tensor, b: usize, c: usize) -> Plane {
        let s = t.shape();
        Plane::new(s.height(), s.width(), t.plane(b, c).to_vec())
    }
}

/// Semantic tag for the planes of an [`Image`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorSpace {
    /// Three planes of 8-bit sRGB codes divided by 255.
    Srgb,
    /// Three planes: `L*/100`, `a*`, `b*` (D65 white).
    Lab,
    /// One plane of `L*/100`.
    Luminance,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Srgb | ColorSpace::Lab => 3,
            ColorSpace::Luminance => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    planes: Vec<Plane>,
    space: ColorSpace,
}

impl Image {
    pub fn new(planes: Vec<Plane>, space: ColorSpace) -> Result<Self, ImgError> {
        if planes.len() != space.channels() {
            return Err(ImgError::ChannelCount {
                expected: space.channels(),
                got: planes.len(),
            });
        }
        let (h, w) = planes[0].dims();
        if h == 0 || w == 0 {
            return Err(ImgError::Empty);
        }
        if let Some(p) = planes.iter().find(|p| p.dims() != (h, w)) {
            return Err(ImgError::SizeMismatch(h, w, p.height(), p.width()));
        }
        Ok(Image { planes, space })
    }

    pub fn luminance(plane: Plane) -> Self {
        Image::new(vec![plane], ColorSpace::Luminance).expect("single non-empty plane")
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn planes(&self) -> &[Plane] {
        &self.planes
    }

    pub fn plane(&self, c: usize) -> &Plane {
        &self.planes[c]
    }

    pub fn into_planes(self) -> Vec<Plane> {
        self.planes
    }

    pub fn height(&self) -> usize {
        self.planes[0].height()
    }

    pub fn width(&self) -> usize {
        self.planes[0].width()
    }

    pub(crate) fn expect_space(&self, expected: ColorSpace) -> Result<(), ImgError> {
        if self.space != expected {
            return Err(ImgError::ColorSpace {
                expected,
                got: self.space,
            });
        }
        Ok(())
    }
}
