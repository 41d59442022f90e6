//! Offline embedder: a seeded hash of each token mapped into `dim`
//! dimensions, summed over tokens and L2-normalized.
//!
//! Texts sharing tokens land close together, which gives tests a stable
//! geometry without a model. Output depends only on (seed, dim, text).

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{l2_norm, EmbeddingProvider};
use crate::error::Result;

pub struct MockEmbedder {
    id: String,
    dim: usize,
    seed: u64,
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "mock embedder needs a positive dimension");
        Self {
            id: format!("mock-embed:{dim}:{seed}"),
            dim,
            seed,
        }
    }

    fn token_vector(&self, token: &str, out: &mut [f64]) {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(token.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(hasher.finalize().into());
        for slot in out.iter_mut() {
            // 53 random bits -> uniform in [-1, 1)
            let unit = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            *slot += 2.0 * unit - 1.0;
        }
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let lowered = text.to_lowercase();
        let mut tokens: Vec<&str> = lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            tokens.push(lowered.as_str());
        }
        let mut acc = vec![0.0; self.dim];
        for token in tokens {
            self.token_vector(token, &mut acc);
        }
        let norm = l2_norm(&acc);
        if norm > 0.0 {
            acc.iter_mut().for_each(|x| *x /= norm);
        } else {
            acc[0] = 1.0;
        }
        acc
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}
