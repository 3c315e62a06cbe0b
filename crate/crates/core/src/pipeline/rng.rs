//! Counter-based derivation of per-sample random streams.
//!
//! Every stream is keyed by `(master_seed, sample_index, instance, label)`
//! and seeded from a SHA-256 digest of that key, so streams are independent
//! of evaluation order and adding a key never perturbs another one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Identifies one sample of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleContext {
    pub master_seed: u64,
    pub sample_index: u64,
}

impl SampleContext {
    pub fn new(master_seed: u64, sample_index: u64) -> Self {
        SampleContext { master_seed, sample_index }
    }

    /// Deterministic stream for `instance`/`label` within this sample.
    pub fn stream(&self, instance: &str, label: &str) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(derive_seed(self.master_seed, self.sample_index, instance, label))
    }
}

pub fn derive_seed(master_seed: u64, sample_index: u64, instance: &str, label: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"synthscope/v1");
    h.update(master_seed.to_le_bytes());
    h.update(sample_index.to_le_bytes());
    for part in [instance, label] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    h.finalize().into()
}
