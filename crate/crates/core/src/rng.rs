//! Deterministic random streams.
//!
//! Every random quantity comes from a ChaCha8 stream selected by
//! `(seed, purpose, index)`, so a trial can be replayed alone and parallel
//! schedules do not change results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u64)]
pub enum Stream {
    Payload = 1,
    Channel = 2,
    Common = 3,
    Source = 4,
    Bootstrap = 5,
}

/// Stream index layout: purpose in the top 16 bits, trial index below.
pub fn stream_rng(seed: u64, purpose: Stream, index: u64) -> ChaCha8Rng {
    debug_assert!(index < 1 << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | index);
    rng
}

/// Counter-based uniforms `r_i` shared by encoder and decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommonRandomness {
    pub seed: u64,
}

impl CommonRandomness {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// `r_i` in `[0, 1)` for the 1-based index `i`; independent of call order.
    pub fn r(&self, i: usize) -> f64 {
        let mut rng = stream_rng(self.seed, Stream::Common, 0);
        rng.set_word_pos(2 * i as u128);
        rng.gen::<f64>()
    }
}
