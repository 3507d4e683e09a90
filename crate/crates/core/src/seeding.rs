//! Named, keyed RNG streams. Each (purpose, seed, key) triple hashes to its
//! own ChaCha seed, so adding a job or a run never shifts another stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn stream(purpose: &str, seed: u64, key: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update((purpose.len() as u64).to_le_bytes());
    h.update(purpose.as_bytes());
    h.update(seed.to_le_bytes());
    h.update(key.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(bytes)
}

/// Derives a child seed, e.g. one per Monte-Carlo run or annealing restart.
pub fn derive(purpose: &str, seed: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream(purpose, seed, &index.to_string()).next_u64()
}
