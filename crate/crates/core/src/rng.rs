//! Seeded, counter-based random streams.
//!
//! Every random draw in a run comes from `ChaCha8Rng` seeded with the run
//! seed; independent consumers use distinct stream ids so they never overlap
//! and can be reproduced in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Weight initialization.
pub const STREAM_INIT: u64 = 0;
/// Original-domain training batches.
pub const STREAM_BASELINE: u64 = 1;
/// New-domain fine-tuning batches.
pub const STREAM_FINETUNE: u64 = 2;

pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Full generator position, enough to resume a stream bit-exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSnapshot {
    pub key: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngSnapshot {
    pub fn capture(rng: &StreamRng) -> Self {
        Self { key: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos() }
    }

    pub fn restore(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}
