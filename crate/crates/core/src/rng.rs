//! Named random substreams derived from a single run seed.
//!
//! Every consumer of randomness (parameter init, shuffling, fold assignment,
//! synthetic data) draws from its own stream so that one module cannot shift
//! another's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a. Stable across platforms and compiler versions, unlike
/// `std::hash::DefaultHasher`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn mix(seed: u64, name: &str, index: u64) -> u64 {
    let mut buf = Vec::with_capacity(16 + name.len());
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.extend_from_slice(&index.to_le_bytes());
    fnv1a(&buf)
}

/// Stream `name` of the run seeded with `seed`.
pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, name, 0))
}

/// Stream `name` specialised by an index (epoch, fold, iteration...).
pub fn indexed_substream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, name, index.wrapping_add(1)))
}
