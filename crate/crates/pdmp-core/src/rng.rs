//! Seedable, splittable random number streams.
//!
//! A single master seed deterministically derives any number of independent
//! streams, identified by a `u64` stream id. The event loop gives each jump
//! mechanism its own stream (stream id = mechanism index) and each replica
//! its own sub-seed, so every result in the toolkit is reproducible from one
//! `seed` key.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step, used as a key-derivation mixer.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A family of independent RNG streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    seed: u64,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        RngStreams { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A 64-bit sub-seed for the given stream id. Used to seed replica-level
    /// stream families: replica `r` of an `l`-mechanism experiment uses
    /// stream id `l + r`.
    pub fn subseed(&self, stream_id: u64) -> u64 {
        let mut state = self.seed ^ stream_id.wrapping_mul(0xa076_1d64_78bd_642f);
        splitmix64(&mut state)
    }

    /// The RNG for the given stream id.
    pub fn stream(&self, stream_id: u64) -> ChaCha8Rng {
        let mut state = self.seed ^ stream_id.wrapping_mul(0xa076_1d64_78bd_642f);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}
