//! Hierarchical seed derivation.
//!
//! All randomness flows from a single root seed split into independent
//! streams: root -> realization -> {traffic, channel} -> window. Paired
//! common-random-number comparisons across methods and the central-difference
//! gradient estimator both rely on this layout.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keeping derived seeds from colliding across purposes.
pub mod stream {
    pub const REALIZATION: u64 = 0x01;
    pub const TRAFFIC: u64 = 0x02;
    pub const CHANNEL: u64 = 0x03;
    pub const RATE_WALK: u64 = 0x04;
    pub const ARRIVALS: u64 = 0x05;
    pub const FADING: u64 = 0x06;
    pub const TRAIN: u64 = 0x07;
    pub const INIT: u64 = 0x08;
    pub const LAMBDA: u64 = 0x09;
    pub const SHUFFLE: u64 = 0x0a;
}

/// SplitMix64 finalizer; the standard 64-bit avalanche mix.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` for stream `tag` and index `idx`.
pub fn derive(seed: u64, tag: u64, idx: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag.wrapping_mul(0xa076_1d64_78bd_642f) ^ idx))
}

/// A deterministic RNG for a derived seed.
pub fn rng(seed: u64, tag: u64, idx: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tag, idx))
}
