//! Seed plumbing: one root seed, independent ChaCha streams per consumer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids for the consumers that draw from the root seed.
pub mod stream {
    pub const SHUFFLE: u64 = 1;
    pub const SAMPLER: u64 = 2;
    /// Per-learner streams are `LEARNER_BASE + 2 * index` (search) and
    /// `LEARNER_BASE + 2 * index + 1` (training).
    pub const LEARNER_BASE: u64 = 1 << 16;
}

pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn search_stream(seed: u64, learner_index: usize) -> ChaCha8Rng {
    substream(seed, stream::LEARNER_BASE + 2 * learner_index as u64)
}

/// Seed for the `trial`-th training call of a learner. Independent of how
/// learners interleave.
pub fn training_seed(seed: u64, learner_index: usize, trial: u64) -> u64 {
    use rand::Rng;
    let mut rng = substream(seed, stream::LEARNER_BASE + 2 * learner_index as u64 + 1);
    rng.set_word_pos(u128::from(trial) * 16);
    rng.random()
}
