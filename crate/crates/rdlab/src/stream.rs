//! Seed-derived random streams.
//!
//! Every stochastic component draws from a stream derived from the master
//! seed, a scope tag, and an index, so codebook generation and individual
//! trials never share randomness and runs replay exactly.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// Derive an independent random stream for (`scope_tag`, `index`) under
/// `master_seed`. Identical inputs give identical streams.
pub fn derive_stream(master_seed: u64, scope_tag: &str, index: u64) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update([scope_tag.len() as u8]);
    hasher.update(scope_tag.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(seed)
}
