//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator keyed by a seed
//! derived from a master seed and a path of integer labels, so that any
//! record, epoch, or dropout mask can be regenerated independently.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a path of labels.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(seed), |acc, &p| mix64(acc ^ mix64(p)))
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream labels used with [`derive`].
pub mod stream {
    pub const WAVEFORM: u64 = 1;
    pub const RECIPE: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const INTERFERENCE: u64 = 4;
    pub const TRAIN: u64 = 10;
    pub const VAL: u64 = 11;
    pub const TEST: u64 = 12;
    pub const SHUFFLE: u64 = 20;
    pub const DROPOUT: u64 = 21;
    pub const INIT_AR: u64 = 30;
    pub const INIT_MR: u64 = 31;
    pub const PASS: u64 = 40;
}
