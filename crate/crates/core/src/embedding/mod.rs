//! Dense vectors, cosine similarity and the embedding providers.

pub mod file;
pub mod http;
pub mod mock;

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::cache::{content_hash, ContentCache};
use crate::error::{Error, Result};

pub use file::{read_embeddings_jsonl, write_embeddings_jsonl, EmbeddingRecord};
pub use http::HttpEmbedder;
pub use mock::MockEmbedder;

pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    normalized: bool,
}

impl EmbeddingVector {
    /// Wraps raw values; `normalized` is derived from the L2 norm.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Invalid("embedding has zero dimensions".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("embedding has a non-finite entry".into()));
        }
        let normalized = (l2_norm(&values) - 1.0).abs() < NORM_TOLERANCE;
        Ok(Self { values, normalized })
    }

    /// Values that are known to be finite, e.g. a weighted sum of embeddings.
    pub(crate) fn from_sum(values: Vec<f64>) -> Self {
        Self {
            values,
            normalized: false,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity of two raw slices, clamped to [-1, 1].
pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            found: b.len(),
        });
    }
    let denom = l2_norm(a) * l2_norm(b);
    if denom == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / denom).clamp(-1.0, 1.0))
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    cosine_slices(a.values(), b.values())
}

pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;

    /// One vector per input text, in order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Cache-backed front end to a provider that pins the run's dimension.
pub struct EmbeddingService {
    provider: Arc<dyn EmbeddingProvider>,
    cache: Arc<ContentCache>,
    dim: OnceLock<usize>,
}

impl EmbeddingService {
    pub fn new(provider: Arc<dyn EmbeddingProvider>, cache: Arc<ContentCache>) -> Self {
        Self {
            provider,
            cache,
            dim: OnceLock::new(),
        }
    }

    pub fn provider_id(&self) -> &str {
        self.provider.id()
    }

    /// Dimension established by the first embedding of the run, if any.
    pub fn dim(&self) -> Option<usize> {
        self.dim.get().copied()
    }

    /// Pins the run's dimension ahead of the first call, e.g. to the index's.
    pub fn expect_dim(&self, dim: usize) -> Result<()> {
        self.check_dim(dim)
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        let expected = *self.dim.get_or_init(|| found);
        if expected != found {
            return Err(Error::Dimension { expected, found });
        }
        Ok(())
    }

    fn key(&self, text: &str) -> String {
        content_hash(&[
            b"embedding-v1",
            self.provider.id().as_bytes(),
            text.as_bytes(),
        ])
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Err(Error::Invalid("nothing to embed".into()));
        }
        let keys: Vec<String> = texts.iter().map(|t| self.key(t)).collect();
        let mut found: HashMap<&str, Vec<f64>> = HashMap::new();
        let mut missing: Vec<(&str, &String)> = Vec::new();
        for (key, text) in keys.iter().zip(texts) {
            if found.contains_key(key.as_str()) || missing.iter().any(|(k, _)| *k == key.as_str()) {
                continue;
            }
            match self
                .cache
                .get(key)
                .and_then(|v| serde_json::from_str::<Vec<f64>>(&v).ok())
            {
                Some(values) => {
                    found.insert(key, values);
                }
                None => missing.push((key, text)),
            }
        }
        if !missing.is_empty() {
            let batch: Vec<String> = missing.iter().map(|(_, t)| (*t).clone()).collect();
            let vectors = self.provider.embed_batch(&batch)?;
            if vectors.len() != batch.len() {
                return Err(Error::Contract {
                    provider: self.provider.id().to_string(),
                    message: format!("{} texts in, {} vectors out", batch.len(), vectors.len()),
                });
            }
            for ((key, _), values) in missing.into_iter().zip(vectors) {
                self.cache.put(key, &serde_json::to_string(&values)?)?;
                found.insert(key, values);
            }
        }
        keys.iter()
            .map(|k| {
                let values = found[k.as_str()].clone();
                self.check_dim(values.len())?;
                EmbeddingVector::new(values)
            })
            .collect()
    }

    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector> {
        Ok(self
            .embed(std::slice::from_ref(&text.to_string()))?
            .pop()
            .expect("one text in, one vector out"))
    }
}
