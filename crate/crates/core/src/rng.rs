//! Seed derivation. Every stochastic stage derives its own stream from the
//! run seed so results do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser applied to `a ⊕ rotate(b)`.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.rotate_left(29) ^ 0x9e37_79b9_7f4a_7c15;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(seed, domain), index))
}

/// Stream identifiers.
pub mod domain {
    pub const SINGER: u64 = 1;
    pub const SONG: u64 = 2;
    pub const BATCH: u64 = 3;
    pub const STEP_NOISE: u64 = 4;
    pub const INIT: u64 = 5;
    pub const PROBE: u64 = 6;
}
