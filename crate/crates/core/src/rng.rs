//! Deterministic random streams.
//!
//! Every stochastic component draws from its own [`Stream`], derived from the
//! run seed and a tag path, so adding a consumer never shifts another
//! consumer's sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of tags into a child seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &tag| splitmix64(acc ^ splitmix64(tag)))
}

pub fn stream(base: u64, path: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}

/// Stable tags for the stream families used across the crate.
pub mod tag {
    pub const MOBILITY: u64 = 1;
    pub const SHADOWING: u64 = 2;
    pub const PLACEMENT: u64 = 3;
    pub const FOREST: u64 = 4;
    pub const POLICY: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const EPISODE: u64 = 7;
    pub const ACTION: u64 = 8;
    pub const TRAIN: u64 = 9;
    pub const CAMPAIGN: u64 = 10;
}
