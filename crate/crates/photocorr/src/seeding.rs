//! Splittable counter-based seeding for deterministic parallel Monte Carlo.
//!
//! Rayon does not guarantee a stable partition of work across runs, so
//! per-batch RNG state must not depend on how the scheduler slices the
//! work. Every simulation in this crate divides its trials into fixed-size
//! batches and derives one ChaCha stream per batch index from the master
//! seed. Results are then identical for any worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of trials handled per independently seeded batch.
pub const BATCH_SIZE: u64 = 65_536;

/// RNG for batch `stream` of the run identified by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Split `trials` into `(batch_index, batch_len)` pairs of at most
/// [`BATCH_SIZE`] trials each.
pub fn batches(trials: u64) -> Vec<(u64, u64)> {
    let n = trials.div_ceil(BATCH_SIZE);
    (0..n)
        .map(|i| {
            let len = if i == n - 1 && trials % BATCH_SIZE != 0 {
                trials % BATCH_SIZE
            } else {
                BATCH_SIZE.min(trials)
            };
            (i, len)
        })
        .collect()
}
