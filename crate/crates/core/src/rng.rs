//! Deterministic random streams.
//!
//! Every trajectory owns a `ChaCha8Rng` seeded from a 64-bit stream seed. In
//! sweeps the stream seed is derived from the master seed and the
//! (value index, replica index) pair by chaining SplitMix64 finalisers:
//!
//! ```text
//! s = mix(mix(mix(master) ^ value_index) ^ replica_index)
//! ```
//!
//! where `mix(z)` is one SplitMix64 step applied to `z`. The mapping is
//! stable across versions and platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random generator used for all simulations.
pub type SimRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// One SplitMix64 step.
#[inline]
pub fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the stream for one sweep cell.
pub fn derive_stream_seed(master: u64, value_index: u64, replica_index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ value_index) ^ replica_index)
}

pub fn stream(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn splitmix_reference_values() {
        // First outputs of the reference SplitMix64 generator seeded with 0.
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
        assert_eq!(splitmix64(GOLDEN_GAMMA), 0x6e78_9e6a_a1b9_65f4);
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a = derive_stream_seed(0, 0, 0);
        let b = derive_stream_seed(0, 0, 1);
        let c = derive_stream_seed(0, 1, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(b, c);
        let x: u64 = stream(a).random();
        let y: u64 = stream(a).random();
        assert_eq!(x, y);
    }
}
