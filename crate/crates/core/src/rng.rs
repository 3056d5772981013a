//! Seed derivation and seeded generators.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by a base
//! seed mixed with a small tuple of integer tags (sampling step, block index,
//! purpose). ChaCha is a counter-based generator, so the streams are identical
//! on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a sub-seed from a base seed and a tag path.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(base), |acc, &t| mix(acc ^ mix(t)))
}

pub fn stream(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

/// Fills `n` standard-normal samples.
pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let v: f64 = rng.sample(StandardNormal);
            v as f32
        })
        .collect()
}

/// Uniform integer in `0..n` drawn from 32-bit words, independent of `usize` width.
pub fn below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    debug_assert!(n > 0 && n <= u32::MAX as usize);
    rng.random_range(0..n as u32) as usize
}

// Purpose tags, so unrelated streams never collide.
pub const TAG_NOISE: u64 = 0x6e6f_6973;
pub const TAG_ANCHOR: u64 = 0x616e_6368;
pub const TAG_INIT: u64 = 0x696e_6974;
pub const TAG_TRAIN: u64 = 0x7472_6169;
pub const TAG_SCENE: u64 = 0x7363_656e;
