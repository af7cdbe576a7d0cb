//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose seed is
//! derived from the master seed and a tuple of integer labels, so results do
//! not depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream labels used by the library.
pub mod tag {
    pub const DATASET: u64 = 1;
    pub const TRAIN_INIT: u64 = 2;
    pub const TRAIN_ORDER: u64 = 3;
    pub const SURROGATE: u64 = 4;
    pub const TEST_SET: u64 = 5;
    pub const SPLIT: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with a sequence of labels into a new 64-bit seed.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(seed), |acc, &l| splitmix64(acc ^ splitmix64(l)))
}

pub fn stream(seed: u64, labels: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, labels))
}
