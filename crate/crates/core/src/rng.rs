//! Seeded randomness.
//!
//! All stochastic choices draw from a SplitMix64 stream (Steele, Lea & Flood
//! 2014): `state += 0x9e3779b97f4a7c15`, then the output mixer
//! `z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9; z = (z ^ (z >> 27)) * 0x94d049bb133111eb;
//! z ^ (z >> 31)`. Floats in `[0, 1)` are `(next_u64 >> 11) * 2^-53`; bounded
//! integers use `rand`'s widening-multiply sampler.

use rand::SeedableRng;
pub use rand_xoshiro::SplitMix64;

/// Stream used by every search routine.
pub type SearchRng = SplitMix64;

pub fn seeded(seed: u64) -> SearchRng {
    SplitMix64::seed_from_u64(seed)
}

/// Independent seed for sub-network `index` derived from a run seed.
pub fn derive_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
