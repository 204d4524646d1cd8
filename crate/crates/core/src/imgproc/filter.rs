use super::{ImgError, Plane};
use crate::tensor::{forward_differences, Shape, Tensor};

/// Discrete Laplacian kernel, applied as a correlation. It is symmetric, so
/// correlation and convolution agree.
pub const LAPLACIAN_KERNEL: [[f64; 3]; 3] = [[0.0, -1.0, 0.0], [-1.0, 4.0, -1.0], [0.0, -1.0, 0.0]];

impl Plane {
    fn at_or_zero(&self, i: isize, j: isize) -> f64 {
        if i < 0 || j < 0 || i >= self.height() as isize || j >= self.width() as isize {
            0.0
        } else {
            self.get(i as usize, j as usize)
        }
    }
}

/// Second-derivative edge response: correlation with [`LAPLACIAN_KERNEL`],
/// zero padding, same size, no rescaling.
pub fn laplacian(img: &Plane) -> Result<Plane, ImgError> {
    if img.is_empty() {
        return Err(ImgError::Empty);
    }
    Ok(Plane::from_fn(img.height(), img.width(), |i, j| {
        let (i, j) = (i as isize, j as isize);
        let mut acc = 0.0;
        for (di, row) in LAPLACIAN_KERNEL.iter().enumerate() {
            for (dj, &k) in row.iter().enumerate() {
                if k != 0.0 {
                    acc += k * img.at_or_zero(i + di as isize - 1, j + dj as isize - 1);
                }
            }
        }
        acc
    }))
}

/// Forward-difference gradients `(gx, gy)`; the last column of `gx` and the
/// last row of `gy` are zero.
pub fn spatial_gradient(img: &Plane) -> (Plane, Plane) {
    let (h, w) = img.dims();
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    forward_differences(img.data(), h, w, &mut gx, &mut gy);
    (Plane::new(h, w, gx), Plane::new(h, w, gy))
}

/// The Laplacian kernel as a `(1, 1, 3, 3)` conv weight.
pub fn laplacian_weight() -> Tensor {
    let data = LAPLACIAN_KERNEL.iter().flatten().copied().collect();
    Tensor::new(Shape::new(1, 1, 3, 3), data).expect("finite kernel")
}
