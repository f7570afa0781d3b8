//! Named deterministic random streams.
//!
//! Every consumer of randomness (workload, network, failures, agent
//! exploration, ...) owns its own stream, derived from one master seed and
//! a label. The same `(seed, label, index)` triple yields the same draw
//! sequence on every platform, and distinct labels never share draws.

use core::fmt;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RngError {
    /// `draw_uniform` called with `lo > hi`.
    EmptyRange { lo: f64, hi: f64 },
}

impl fmt::Display for RngError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RngError::EmptyRange { lo, hi } => {
                write!(f, "empty range: lo {lo} > hi {hi}")
            }
        }
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A derived 64-bit seed for `(master, label, index)`. Used wherever a
/// sub-experiment (episode, replicate, scenario) needs its own seed.
pub fn derive_seed(master_seed: u64, label: &str, index: u64) -> u64 {
    let mut state = master_seed ^ fnv1a64(label.as_bytes());
    let a = splitmix64(&mut state);
    state ^= index;
    let b = splitmix64(&mut state);
    a ^ b.rotate_left(17)
}

/// A deterministic random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn named(master_seed: u64, label: &str) -> Self {
        Self::indexed(master_seed, label, 0)
    }

    pub fn indexed(master_seed: u64, label: &str, index: u64) -> Self {
        let mut state = derive_seed(master_seed, label, index);
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        RngStream {
            rng: ChaCha8Rng::from_seed(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 significant bits.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi]`; the degenerate interval `lo == hi` returns
    /// `lo` exactly.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64, RngError> {
        if lo > hi {
            return Err(RngError::EmptyRange { lo, hi });
        }
        Ok(lo + self.unit() * (hi - lo))
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    /// Exponentially distributed gap in seconds for a rate in events/second.
    pub fn exp_gap_secs(&mut self, rate_per_sec: f64) -> f64 {
        debug_assert!(rate_per_sec > 0.0);
        -libm::log(1.0 - self.unit()) / rate_per_sec
    }
}
