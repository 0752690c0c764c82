//! Seed derivation. Every random stream is a Xoshiro256++ generator whose
//! seed is a SplitMix64 mix of the master seed and a list of stream ids, so
//! a trial's randomness does not depend on scheduling.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type StreamRng = Xoshiro256PlusPlus;

/// One SplitMix64 output step applied to `x`.
#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mix_seed(master: u64, streams: &[u64]) -> u64 {
    streams
        .iter()
        .fold(splitmix64(master), |h, s| splitmix64(h ^ splitmix64(s.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn stream_rng(master: u64, streams: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(mix_seed(master, streams))
}

/// Stream ids used across the crate.
pub mod stream {
    pub const CODEBOOK: u64 = 1;
    pub const TARGETS: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const BOUND_MC: u64 = 4;
    pub const CONVERSE_MC: u64 = 5;
    pub const SUBSET_MC: u64 = 6;
}
