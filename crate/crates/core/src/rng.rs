//! Seeded random number plumbing.
//!
//! Every stochastic operation takes an explicit `u64` seed and builds a
//! [`ChaCha8Rng`] from it. Sub-streams (per sweep level, per optimizer step)
//! are derived with a SplitMix64 finalizer so that neighbouring seeds give
//! unrelated streams. Both choices are fixed; golden values in the test
//! suite depend on them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed of sub-stream `stream` from a parent seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(
        seed.wrapping_add(0x9e37_79b9_7f4a_7c15)
            .wrapping_mul(0x2545_f491_4f6c_dd1d)
            ^ mix64(stream),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, 0);
        let b = derive_seed(1, 1);
        let c = derive_seed(2, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(1, 0));
    }
}
