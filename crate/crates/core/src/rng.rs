//! Seed derivation. Every random draw in the crate comes from a ChaCha8
//! stream keyed by a base seed and a purpose-specific stream tag, so that
//! e.g. the dropout masks of epoch 7 do not depend on how many draws the
//! mixup sampler made.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a list of tags.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(seed), |acc, &t| mix(acc ^ mix(t)))
}

pub fn stream(seed: u64, tags: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tags))
}

// Stream tags.
pub(crate) const TAG_INIT: u64 = 1;
pub(crate) const TAG_DROPOUT: u64 = 2;
pub(crate) const TAG_MIXUP_PAIRS: u64 = 3;
pub(crate) const TAG_MIXUP_DROPOUT: u64 = 4;
pub(crate) const TAG_SPLITS: u64 = 5;
pub(crate) const TAG_GRAPH: u64 = 6;
pub(crate) const TAG_FEATURES: u64 = 7;
