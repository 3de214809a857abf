//! Deterministic, order-independent seed derivation.
//!
//! Every random stream in the crate is keyed by a tuple of integers
//! (master seed, generation, stream tag, index, ...) and folded through the
//! SplitMix64 finalizer. The result does not depend on evaluation order, so
//! candidates and frames can be evaluated concurrently.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep seed families for different purposes disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Sampling = 0x5a4d_504c,
    Stage1 = 0x5354_4731,
    Stage2 = 0x5354_4732,
    Frame = 0x4652_4d45,
    Episode = 0x4550_4953,
    Baseline = 0x4241_5345,
    Repetition = 0x5245_5045,
    Evaluation = 0x4556_414c,
    Placement = 0x504c_4143,
    Calibration = 0x4341_4c49,
    Pilot = 0x5049_4c4f,
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one 64-bit seed.
pub fn derive(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6a09_e667_f3bc_c908, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Seed for `(master, stream, a, b)`.
pub fn child(master: u64, stream: Stream, a: u64, b: u64) -> u64 {
    derive(&[master, stream as u64, a, b])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
