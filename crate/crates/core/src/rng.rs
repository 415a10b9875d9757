//! Seed tree and per-run random streams.
//!
//! Every random quantity in an experiment is derived from a master seed and
//! a path of logical indices (purpose tag, grid point, trial), never from
//! execution order, so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags for the first component of a seed path.
pub mod tag {
    pub const DATASET: u64 = 1;
    pub const REPLACEMENT: u64 = 2;
    pub const TRIAL: u64 = 3;
    pub const DRAW_RUN: u64 = 4;
    pub const POOL: u64 = 5;
    pub const PAIR: u64 = 6;
    pub const NOISE: u64 = 7;
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Hashes `master` and a path of indices into a child seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// The two substreams of one optimizer run: sampled indices (and the output
/// selector) come from `index`, Gaussian perturbations from `noise`.
pub struct RunStreams {
    pub index: ChaCha8Rng,
    pub noise: ChaCha8Rng,
}

impl RunStreams {
    pub fn new(seed: u64) -> Self {
        let mut index = ChaCha8Rng::seed_from_u64(seed);
        index.set_stream(0);
        let mut noise = ChaCha8Rng::seed_from_u64(seed);
        noise.set_stream(1);
        Self { index, noise }
    }
}
