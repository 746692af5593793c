//! Seeded random sources and sub-seed derivation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random source used everywhere in the crate. ChaCha keeps streams
/// identical across platforms for a given seed.
pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a parent seed with a sequence of tags into an independent sub-seed.
///
/// Adding tags never changes the seeds derived for other tag sequences, so
/// new consumers can be introduced without perturbing existing streams.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

/// Purpose tags for [`derive_seed`].
pub mod tag {
    pub const SUPERNET_INIT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const EVOLUTION: u64 = 3;
    pub const RANDOM_REDUCTION: u64 = 4;
    pub const RANDOM_SAMPLING: u64 = 5;
    pub const TRUTH: u64 = 6;
    pub const NOISE: u64 = 7;
    pub const STAGE: u64 = 8;
}
