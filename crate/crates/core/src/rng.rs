//! Seeded random streams.
//!
//! Every stochastic step derives its generator from a base seed and a
//! stream tag, so results never depend on execution order or threading.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags for the independent consumers of a seed.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const BATCHES: u64 = 2;
    pub const INIT: u64 = 3;
    pub const VIEWS: u64 = 4;
    pub const HOLDOUT: u64 = 5;
    pub const DROPOUT: u64 = 6;
    pub const BASELINE: u64 = 7;
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, stream: u64, index: u64) -> Rng {
    let key = mix(mix(mix(seed) ^ stream) ^ index);
    ChaCha8Rng::seed_from_u64(key)
}
