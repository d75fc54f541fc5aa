//! Hash-derived random streams.
//!
//! Every stochastic step draws from a ChaCha stream keyed by SHA-256 over a
//! domain tag, the global seed and a tuple of indices, so results do not
//! depend on scheduling or on how many other streams were consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

pub fn stream_seed(domain: &str, seed: u64, indices: &[u64]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update((domain.len() as u64).to_le_bytes());
    hasher.update(domain.as_bytes());
    hasher.update(seed.to_le_bytes());
    for i in indices {
        hasher.update(i.to_le_bytes());
    }
    hasher.finalize().into()
}

pub fn stream(domain: &str, seed: u64, indices: &[u64]) -> StreamRng {
    StreamRng::from_seed(stream_seed(domain, seed, indices))
}
