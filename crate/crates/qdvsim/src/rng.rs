//! Labeled deterministic random streams.
//!
//! A run owns a single root seed; every consumer draws from its own named
//! stream derived from that seed. Streams are independent ChaCha8 counters,
//! so adding a consumer (or drawing more from one stream) never perturbs the
//! values another stream produces.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Factory for per-purpose random streams derived from one root seed.
#[derive(Debug, Clone, Copy)]
pub struct RngStreams {
    seed: u64,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Deterministic stream for `label`. The same (seed, label) always
    /// yields the same sequence.
    pub fn stream(&self, label: &str) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(fnv1a64(label.as_bytes()));
        rng
    }
}

/// FNV-1a, used only to map stream labels onto ChaCha stream ids.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
