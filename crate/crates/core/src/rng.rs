//! Seeded randomness.
//!
//! Every random stream in the crate is a `ChaCha8Rng`, whose output is
//! specified bit-for-bit and is identical on every platform. Sub-streams are
//! keyed by mixing a base seed with a path of integers through SplitMix64.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent seed for the stream identified by `path`.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn derived_rng(seed: u64, path: &[u64]) -> Rng {
    rng_from_seed(derive_seed(seed, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derived_streams_differ_and_repeat() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(8, &[1]));
        let a: u64 = derived_rng(3, &[4]).random();
        let b: u64 = derived_rng(3, &[4]).random();
        assert_eq!(a, b);
    }

    #[test]
    fn chacha_stream_is_pinned() {
        // Guards against an accidental generator or seeding change.
        let first: u64 = rng_from_seed(42).random();
        assert_eq!(first, 12_578_764_544_318_200_737);
    }
}
