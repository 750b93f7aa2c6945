//! Named random sub-streams derived from a single run seed.
//!
//! Every consumer gets its own ChaCha stream, positioned by an index (for
//! example the global epoch), so any step can be regenerated without
//! replaying earlier ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Sampling = 2,
    Augmentation = 3,
    Synthetic = 4,
}

/// Words reserved per index within a stream.
const WORDS_PER_INDEX: u128 = 1 << 32;

pub fn stream(seed: u64, which: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng.set_word_pos(index as u128 * WORDS_PER_INDEX);
    rng
}
