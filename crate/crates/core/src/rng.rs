//! Seeded, counter-based random streams.
//!
//! Every random object is addressed by `(seed, stream)`; ChaCha's block
//! counter makes entry `k` of a stream reachable without generating the
//! first `k - 1`, so parallel and sequential generation agree bit-for-bit.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream purposes packed into the low byte of the ChaCha stream id.
pub const FIELD_PURPOSE: u64 = 0xFF;
pub const ALGORITHM_PURPOSE: u64 = 0xFE;
pub const MAX_TERMS: usize = 0xF0;

pub fn stream_id(sample_index: u64, purpose: u64) -> u64 {
    (sample_index << 8) | (purpose & 0xFF)
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard Gaussians drawn two 64-bit words per value (Box-Muller, cosine
/// branch), so value `k` sits at a fixed counter offset.
pub struct GaussianStream {
    rng: ChaCha8Rng,
}

impl GaussianStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            rng: stream_rng(seed, stream),
        }
    }

    /// Positions the stream so the next draw is value number `index`.
    pub fn seek(&mut self, index: u64) {
        // four 32-bit words per Gaussian
        self.rng.set_word_pos(index as u128 * 4);
    }

    #[inline]
    pub fn next_gaussian(&mut self) -> f64 {
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        let u1 = ((a >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64);
        let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_gaussian();
        }
    }
}
