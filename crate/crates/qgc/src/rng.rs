//! Deterministic stream derivation for reproducible experiments.
//!
//! Every source of randomness in the simulator is a ChaCha8 stream keyed by a
//! master seed plus a tag path such as `(trial, iteration, worker)`. Streams
//! with distinct tags are independent, and a given tag always produces the
//! same stream regardless of thread scheduling or platform.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tag namespaces so different consumers of randomness never collide.
pub mod purpose {
    pub const PROFILES: u64 = 0x01;
    pub const STRAGGLERS: u64 = 0x02;
    pub const QUANTIZER: u64 = 0x03;
    pub const CODE_WEIGHTS: u64 = 0x04;
    pub const LOSS: u64 = 0x05;
    pub const MINIBATCH: u64 = 0x06;
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a 64-bit subseed from a master seed and a tag path.
pub fn subseed(master: u64, tags: &[u64]) -> u64 {
    let mut state = master;
    let mut out = splitmix64(&mut state);
    for &t in tags {
        state ^= t;
        out ^= splitmix64(&mut state);
    }
    out
}

/// A seeded counter-based stream for the given tag path.
pub fn substream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(subseed(master, tags))
}
