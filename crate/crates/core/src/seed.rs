//! Deterministic seed derivation.
//!
//! Every random stream in the library is derived from a master seed plus a
//! path of integer tags (stream kind, trial index, user id, ...). Identical
//! (seed, tags) always yields an identical generator, which makes whole
//! experiments replayable and lets independent streams (per trial, per user)
//! run in any order without affecting results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; decorrelates nearby integer inputs.
fn mix(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a tag path.
pub fn child_seed(master: u64, tags: &[u64]) -> u64 {
    let mut h = mix(master);
    for &tag in tags {
        h = mix(h ^ mix(tag));
    }
    h
}

/// A seeded generator for the stream identified by `(master, tags)`.
pub fn stream_rng(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(master, tags))
}
