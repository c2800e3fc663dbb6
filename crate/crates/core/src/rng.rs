//! Deterministic seed derivation.
//!
//! Every random draw in the crate comes from a ChaCha stream whose seed is a
//! hash of the run's root seed and a tuple of tags (purpose, epoch, sample
//! index, ...). Streams never depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tags separating independent random streams.
pub mod purpose {
    pub const CODEBOOK: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const ENCODE_POS: u64 = 4;
    pub const ENCODE_NEG: u64 = 5;
    pub const NEG_LABEL: u64 = 6;
    pub const ENCODE_EVAL: u64 = 7;
    pub const STORE_SAMPLE: u64 = 8;
    pub const OBSTRUCT: u64 = 9;
    pub const DECODER: u64 = 10;
    pub const SPLIT: u64 = 11;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a root seed with a list of tags into a new 64-bit seed.
pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(root), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(root: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, tags))
}
