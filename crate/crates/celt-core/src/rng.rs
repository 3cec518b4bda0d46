//! Deterministic seeding.
//!
//! A single master seed expands into independent named substreams (init,
//! masking, shuffle, dropout, data-gen, split, ...) so that toggling one
//! consumer of randomness never perturbs another's stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a ChaCha stream from `(master, name, counter)`.
///
/// The key is SHA-256 of the three components, so distinct names or
/// counters yield statistically independent streams.
pub fn substream(master: u64, name: &str, counter: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update([0u8]);
    hasher.update(name.as_bytes());
    hasher.update([0u8]);
    hasher.update(counter.to_le_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}
