//! Portable seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` whose 64-bit seed is
//! derived from a master seed and a label by SHA-256, so streams are stable
//! across platforms, releases, and scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Mix a master seed with an arbitrary label.
pub fn derive(seed: u64, label: &[u8]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label);
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn derive_index(seed: u64, index: u64) -> u64 {
    derive(seed, &index.to_le_bytes())
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
