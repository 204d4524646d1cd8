//! Fixtures shared by the benchmarks in `benches/`.

use lapdeblur_core::data::procedural_scene;
use lapdeblur_core::imgproc::{motion_kernel, synthesize_blur, Plane};
use lapdeblur_core::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform values in `[-1, 1)`.
pub fn random_tensor(shape: Shape, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..shape.numel()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape, data).expect("shape matches data")
}

/// A procedural scene and its motion-blurred copy.
pub fn scene_pair(size: usize, seed: u64) -> (Plane, Plane) {
    let sharp = procedural_scene(size, size, seed);
    let kernel = motion_kernel(7, 30.0).expect("valid kernel");
    let blurred = synthesize_blur(&sharp, &kernel, 0.0, seed).expect("blur succeeds");
    (sharp, blurred)
}
