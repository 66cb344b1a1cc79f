//! Deterministic RNG streams.
//!
//! Every independent job (a pairwise net, a CV fold, a noise draw) gets its own
//! ChaCha stream keyed by a tuple of integers, so results never depend on
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

// Domain tags keep streams for different purposes apart.
pub const TAG_PAIR: u64 = 0x7061_6972;
pub const TAG_MULTICLASS: u64 = 0x6d75_6c74;
pub const TAG_NOISE: u64 = 0x6e6f_6973;
pub const TAG_FOLDS: u64 = 0x666f_6c64;
pub const TAG_CELL: u64 = 0x6365_6c6c;
pub const TAG_SYNTH: u64 = 0x7379_6e74;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a base seed and a sequence of stream identifiers into one seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(base: u64, parts: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(base, parts))
}
