//! Order-independent seed derivation.
//!
//! Child seeds are computed from `(master, stream, index)` with the
//! SplitMix64 finalizer, so any item's randomness can be reproduced without
//! replaying the items before it.

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for item `index` of a named `stream` under `master`.
pub fn derive(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ stream as u64).wrapping_add(index))
}

/// Independent random streams drawn from one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 0x494E_4954,
    Batch = 0x4241_5443,
    Scene = 0x5343_454E,
    Noise = 0x4E4F_4953,
    Kernel = 0x4B45_524E,
    Patch = 0x5041_5443,
}
