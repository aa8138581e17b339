//! One 64-bit seed fans out into independent, reproducible sub-streams.
//!
//! `derive_seed(seed, stream)` runs two rounds of the splitmix64 finalizer on
//! `seed + (stream + 1) · 0x9E3779B97F4A7C15` (wrapping). Each sub-stream then
//! seeds its own `ChaCha8Rng`, whose output is platform independent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream identifiers used by the pipeline.
pub mod stream {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const TEST_DATA: u64 = 3;
    pub const GENERATE: u64 = 4;
    pub const DISTILL_NOISE: u64 = 5;
    pub const DISTILL_TRAIN: u64 = 6;
    /// Block `n` (1-based) of an LFM run trains on `derive_seed(seed, BLOCK_BASE + n)`.
    pub const BLOCK_BASE: u64 = 1000;
    /// Inside a block: parameter initialization and batch drawing.
    pub const INIT: u64 = 0;
    pub const BATCHES: u64 = 1;
}

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(GOLDEN));
    splitmix64(splitmix64(z))
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}
