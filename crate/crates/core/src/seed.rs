//! Seed derivation.
//!
//! Every random stream in a campaign is derived from the campaign seed, so a
//! run is fully reproducible from one integer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random source used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Stream tags keep derived seeds for different purposes apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Optimizer = 1,
    Evaluation = 2,
    Forest = 3,
    Analysis = 4,
}

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, stream: Stream, index: u64) -> u64 {
    mix64(mix64(seed ^ mix64(stream as u64)) ^ index)
}

pub fn rng_from(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn derived_rng(seed: u64, stream: Stream, index: u64) -> Rng {
    rng_from(derive(seed, stream, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_distinct() {
        let a = derive(1, Stream::Optimizer, 0);
        let b = derive(1, Stream::Evaluation, 0);
        let c = derive(1, Stream::Optimizer, 1);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive(1, Stream::Optimizer, 0));
    }
}
