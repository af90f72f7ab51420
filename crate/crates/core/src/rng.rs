//! Seeded generator streams. Every stochastic routine takes one of these
//! explicitly; replicate `i` of a run seeded with `s` always draws from
//! `stream(s, i)` regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha8Rng;

/// Generator for replicate `index` under master `seed`. The 256-bit state is
/// the SHA-256 digest of the pair, so neighbouring indices share nothing.
pub fn stream(seed: u64, index: u64) -> Stream {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Short identifier for a stream, written alongside each trial record.
pub fn stream_id(seed: u64, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"stream-id");
    hasher.update(seed.to_le_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
