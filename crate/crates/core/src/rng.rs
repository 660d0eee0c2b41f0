//! Seeded substream construction.
//!
//! Every random draw in the crate flows from a single episode seed through
//! named substreams, so that episodes replay bit-exactly and independent
//! components (loss draw, exploration directions, delay generation) can be
//! sampled in any order without interfering. The substream key is derived
//! with SplitMix64, which is fixed here rather than taken from `std` hashers
//! so the mapping stays stable across toolchains.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Substream domain tags. Keep values stable: they are part of the replay
/// contract.
pub mod tag {
    /// Per-round loss family parameters.
    pub const LOSS: u64 = 1;
    /// Wrapper exploration directions.
    pub const EXPLORE: u64 = 2;
    /// Delay schedule generation.
    pub const DELAY: u64 = 3;
    /// Test-side Monte Carlo draws.
    pub const TEST: u64 = 4;
}

/// SplitMix64 step (Steele, Lea, Flood 2014).
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the ChaCha8 generator for substream `(seed, tag, index)`.
///
/// `index` is typically a round number; streams for distinct `(tag, index)`
/// pairs under the same seed are computationally independent.
pub fn substream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mixed = splitmix64(seed ^ splitmix64(tag ^ splitmix64(index)));
    ChaCha8Rng::seed_from_u64(mixed)
}
