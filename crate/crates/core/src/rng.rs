//! Seeded random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by the
//! user seed. Independent consumers (labels, features, per-node edge
//! sampling, splits) each own a distinct stream id, so changing how many
//! values one consumer draws never shifts another consumer's sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Name recorded in provenance files.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9), seed_from_u64 key, one stream id per consumer";

pub mod stream {
    pub const LABELS: u64 = 0;
    pub const FEATURES: u64 = 1;
    pub const DEGREES: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SHUFFLE_SELECT: u64 = 5;
    /// Node `i` samples its edges from stream `NODE_BASE + i`.
    pub const NODE_BASE: u64 = 1 << 32;
    /// Group `g` of a shuffle uses stream `GROUP_BASE + g`.
    pub const GROUP_BASE: u64 = 1 << 48;
}

pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for trial `trial` of grid cell `cell`: `seed ^ hash(cell, trial)`.
pub fn derive_seed(seed: u64, cell: u64, trial: u64) -> u64 {
    seed ^ mix64(mix64(cell) ^ trial.rotate_left(17))
}
