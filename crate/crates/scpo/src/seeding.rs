//! Deterministic substream derivation.
//!
//! Every stochastic draw in the crate flows from one master seed through a
//! labeled substream. A substream is identified by a label ("env",
//! "rollout", "answer", "init", "trial", ...) plus integer indices, so work
//! items can run in any order — or in parallel — without changing results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives an independent RNG for `(master, label, indices)`.
pub fn stream_rng(master: u64, label: &str, indices: &[u64]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update([label.len() as u8]);
    hasher.update(label.as_bytes());
    for ix in indices {
        hasher.update(ix.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}
