//! How many intent clusters the clustering step produces and how similar
//! the representatives within a set are.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, EmbeddingService};
use crate::error::{Error, Result};
use crate::types::ClusterSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub sets: usize,
    /// cluster count -> number of sets.
    pub counts: BTreeMap<usize, usize>,
    /// cluster count -> fraction of sets.
    pub count_distribution: BTreeMap<usize, f64>,
    /// cluster count (2 or 3) -> mean over sets of the set's mean pairwise cosine.
    pub mean_pairwise_similarity: BTreeMap<usize, f64>,
}

pub fn cluster_stats(sets: &[ClusterSet], embedder: &EmbeddingService) -> Result<ClusterStats> {
    if sets.is_empty() {
        return Err(Error::Invalid("no cluster sets to summarize".into()));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut similarity_sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for set in sets {
        *counts.entry(set.len()).or_default() += 1;
        if set.len() < 2 {
            continue;
        }
        let vectors = embedder.embed(set.clusters())?;
        let mut total = 0.0;
        let mut pairs = 0usize;
        for i in 0..vectors.len() {
            for j in i + 1..vectors.len() {
                total += cosine(&vectors[i], &vectors[j])?;
                pairs += 1;
            }
        }
        let entry = similarity_sums.entry(set.len()).or_default();
        entry.0 += total / pairs as f64;
        entry.1 += 1;
    }
    let n = sets.len() as f64;
    Ok(ClusterStats {
        sets: sets.len(),
        count_distribution: counts.iter().map(|(&k, &c)| (k, c as f64 / n)).collect(),
        counts,
        mean_pairwise_similarity: similarity_sums
            .into_iter()
            .map(|(k, (sum, c))| (k, sum / c as f64))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::ContentCache;
    use crate::embedding::MockEmbedder;
    use std::sync::Arc;

    fn set(items: &[&str]) -> ClusterSet {
        ClusterSet::new(items.iter().map(|s| s.to_string()).collect(), 0).unwrap()
    }

    fn service() -> EmbeddingService {
        EmbeddingService::new(
            Arc::new(MockEmbedder::new(16, 0)),
            Arc::new(ContentCache::in_memory()),
        )
    }

    #[test]
    fn count_distribution() {
        let sets = [
            set(&["a", "b", "c"]),
            set(&["d", "e", "f"]),
            set(&["g", "h"]),
        ];
        let stats = cluster_stats(&sets, &service()).unwrap();
        assert!((stats.count_distribution[&3] - 2.0 / 3.0).abs() < 1e-12);
        assert!((stats.count_distribution[&2] - 1.0 / 3.0).abs() < 1e-12);
        assert!(!stats.count_distribution.contains_key(&1));
    }

    #[test]
    fn identical_pair_has_similarity_one() {
        let stats = cluster_stats(&[set(&["fever causes", "fever causes"])], &service()).unwrap();
        assert!((stats.mean_pairwise_similarity[&2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_cluster_only_counts() {
        let stats = cluster_stats(&[set(&["only"])], &service()).unwrap();
        assert_eq!(stats.counts[&1], 1);
        assert!(stats.mean_pairwise_similarity.is_empty());
        assert!(cluster_stats(&[], &service()).is_err());
    }
}
