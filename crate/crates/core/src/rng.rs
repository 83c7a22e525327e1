//! Seeded random-number streams.
//!
//! Every stochastic routine in the crate takes an explicit generator so that
//! a single `u64` seed fully determines an experiment. Parallel work (Markov
//! chains per temperature, restarts, batch items) gets independent streams
//! derived with [`child_rng`], which keeps results independent of scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The crate-wide generator type.
pub type Rng = ChaCha8Rng;

/// Generator seeded directly from `seed`.
pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for sub-stream `stream` of `seed`.
///
/// Distinct `(seed, stream)` pairs give statistically independent streams;
/// the same pair always gives the same stream.
pub fn child_rng(seed: u64, stream: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, stream))
}

// SplitMix64 finalizer over the pair.
fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(stream.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
