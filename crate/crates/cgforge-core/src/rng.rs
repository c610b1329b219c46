//! Seed fan-out.
//!
//! Every random choice in a run flows from one root seed through named
//! sub-streams, so that reruns with the same manifest are bit-identical
//! and independent stages do not share RNG state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Derives a deterministic RNG for the sub-stream `label` under `root`.
pub fn subseed(root: u64, label: &str) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(seed)
}
