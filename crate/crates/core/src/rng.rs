//! Seeded random sub-streams.
//!
//! Every randomized stage draws from its own ChaCha8 stream whose 256-bit key
//! is `SHA-256("repurpose-rng" || seed_le || name)`. Stages never share a
//! stream, so changing e.g. the split seed cannot perturb balancing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StageRng = ChaCha8Rng;

pub fn stream(seed: u64, name: &str) -> StageRng {
    let mut hasher = Sha256::new();
    hasher.update(b"repurpose-rng");
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(key)
}

/// Derives the seed of run `index` from a master seed.
pub fn run_seed(master: u64, index: usize) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"repurpose-run");
    hasher.update(master.to_le_bytes());
    hasher.update((index as u64).to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
