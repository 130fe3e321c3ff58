//! Seed plumbing. Every random draw in the crate comes from a ChaCha stream
//! keyed by a config-declared seed; nothing reads the clock.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// First eight bytes (little-endian) of SHA-256 over `bytes`.
pub fn hash64(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Stable child seed for a labelled sub-stream, e.g. `derive(trial_seed, "init")`.
pub fn derive(seed: u64, label: &str) -> u64 {
    let mut buf = seed.to_le_bytes().to_vec();
    buf.extend_from_slice(label.as_bytes());
    hash64(&buf)
}
