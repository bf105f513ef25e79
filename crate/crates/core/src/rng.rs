//! Seeded, splittable randomness.
//!
//! Every stochastic routine takes an explicit RNG. Independent work units
//! (permutation replicates, simulation replicates, k-means restarts) draw
//! from separate ChaCha streams of a single master seed, so parallel and
//! serial schedules produce identical results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG for stream `stream` of `master_seed`. Streams are independent.
pub fn derived_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids used by the test pipelines. Replicate m uses
/// `PERMUTATION_BASE + m`; simulation replicate r uses `SIMULATION_BASE + r`.
pub mod streams {
    pub const SPECTRAL_VIEW1: u64 = 0;
    pub const SPECTRAL_VIEW2: u64 = 1;
    pub const PERMUTATION_BASE: u64 = 1_000;
    pub const SIMULATION_BASE: u64 = 1_000_000;
}
