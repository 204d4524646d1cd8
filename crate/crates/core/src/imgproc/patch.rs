use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ImgError, Plane};

/// Aligned sharp/blurred crops cut at the same coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair {
    pub sharp: Plane,
    pub blurred: Plane,
    pub top: usize,
    pub left: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatchMode {
    /// Every position on a regular grid with the given stride.
    Grid { stride: usize },
    /// `count` uniformly random positions.
    Random { count: usize },
}

pub fn extract_patches(
    sharp: &Plane,
    blurred: &Plane,
    patch: usize,
    mode: PatchMode,
    seed: u64,
) -> Result<Vec<PatchPair>, ImgError> {
    let (h, w) = sharp.dims();
    if blurred.dims() != (h, w) {
        return Err(ImgError::SizeMismatch(h, w, blurred.height(), blurred.width()));
    }
    if patch == 0 || matches!(mode, PatchMode::Grid { stride: 0 }) {
        return Err(ImgError::PatchGeometry);
    }
    if h < patch || w < patch {
        return Err(ImgError::SmallerThanPatch {
            height: h,
            width: w,
            patch,
        });
    }
    let cut = |top: usize, left: usize| PatchPair {
        sharp: sharp.crop(top, left, patch, patch),
        blurred: blurred.crop(top, left, patch, patch),
        top,
        left,
    };
    let out = match mode {
        PatchMode::Grid { stride } => {
            let mut v = Vec::new();
            for top in (0..=h - patch).step_by(stride) {
                for left in (0..=w - patch).step_by(stride) {
                    v.push(cut(top, left));
                }
            }
            v
        }
        PatchMode::Random { count } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    let top = rng.random_range(0..=h - patch);
                    let left = rng.random_range(0..=w - patch);
                    cut(top, left)
                })
                .collect()
        }
    };
    Ok(out)
}

/// The four augmented copies of a square pair: horizontal flip, vertical
/// flip, 90 and 270 degree rotations. The original is not included.
pub fn augment4(pair: &PatchPair) -> Result<[PatchPair; 4], ImgError> {
    let (h, w) = pair.sharp.dims();
    if h != w || pair.blurred.dims() != (h, w) {
        return Err(ImgError::NotSquare(h, w));
    }
    let apply = |f: fn(&Plane) -> Plane| PatchPair {
        sharp: f(&pair.sharp),
        blurred: f(&pair.blurred),
        top: pair.top,
        left: pair.left,
    };
    Ok([apply(Plane::flip_x), apply(Plane::flip_y), apply(Plane::rot90), apply(Plane::rot270)])
}
