//! Named random sub-streams derived from one root seed.
//!
//! Every consumer of randomness asks for a child stream by name (fold,
//! repeat, algorithm, noise draw, ...). Streams are a pure function of the
//! root seed and the name path, so adding a new consumer never shifts the
//! numbers an existing consumer sees.

use std::fmt::Display;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTree {
    root: u64,
    path: Vec<String>,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { root, path: Vec::new() }
    }

    pub fn child(&self, name: impl Display) -> Self {
        let mut path = self.path.clone();
        path.push(name.to_string());
        Self { root: self.root, path }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Human-readable lineage, e.g. `["root=7", "loso", "t=s03"]`.
    pub fn lineage(&self) -> Vec<String> {
        let mut out = vec![format!("root={}", self.root)];
        out.extend(self.path.iter().cloned());
        out
    }

    pub fn seed(&self) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update(self.root.to_le_bytes());
        for part in &self.path {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part.as_bytes());
        }
        let digest = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed())
    }
}
