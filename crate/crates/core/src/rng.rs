//! Named, independent random streams derived from one master seed.
//!
//! Each stream is a ChaCha8 generator keyed by `SHA-256(master_seed_le || label)`.
//! Streams never share state, so one consumer drawing more values cannot
//! shift what another consumer sees.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Deterministic stream for `(master_seed, label)`.
pub fn seed_stream(master_seed: u64, label: &str) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("random stream label {0:?} registered twice")]
pub struct DuplicateLabel(pub String);

/// Hands out streams and refuses to issue the same label twice.
#[derive(Debug, Clone)]
pub struct SeedRegistry {
    master: u64,
    issued: BTreeSet<String>,
}

impl SeedRegistry {
    pub fn new(master_seed: u64) -> Self {
        SeedRegistry { master: master_seed, issued: BTreeSet::new() }
    }

    pub fn master_seed(&self) -> u64 {
        self.master
    }

    pub fn stream(&mut self, label: &str) -> Result<StreamRng, DuplicateLabel> {
        if !self.issued.insert(label.to_string()) {
            return Err(DuplicateLabel(label.to_string()));
        }
        Ok(seed_stream(self.master, label))
    }
}
