//! Derivation of independent RNG streams from a master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream labels mixed into derived seeds.
pub mod stream {
    pub const SHUFFLE: u64 = 1;
    pub const TRAIN_LINK: u64 = 2;
    pub const VALIDATION_LINK: u64 = 3;
    pub const EVAL_LINK: u64 = 4;
    pub const INIT: u64 = 5;
    pub const CHANNEL: u64 = 6;
    pub const NOISE: u64 = 7;
    pub const CSI: u64 = 8;
    pub const CORPUS: u64 = 9;
    pub const BENCH: u64 = 10;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `path` into `master`; distinct paths give unrelated seeds.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(master), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
