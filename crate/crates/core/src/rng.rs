//! Deterministic random substreams.
//!
//! Every Monte Carlo replication and bootstrap draw gets its own ChaCha
//! stream keyed by `(seed, index)`, so results do not depend on how rayon
//! schedules the work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn substream(seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Mixes a label into a base seed (FNV-1a), used to give each scenario its own key.
pub fn keyed_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
