//! Exact-scan dense retrieval over precomputed document embeddings.

pub mod beir;
pub mod trec;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::config::ScoreFn;
use crate::embedding::{dot, l2_norm};
use crate::error::{Error, Result};

pub use beir::{ingest_corpus, read_corpus, read_queries, CorpusDoc, IngestReport};
pub use trec::{read_run, write_run};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMetadata {
    pub source: String,
    pub provider: String,
}

/// Row-major document matrix with per-row norms.
#[derive(Debug, Clone)]
pub struct DocIndex {
    doc_ids: Vec<String>,
    matrix: Vec<f64>,
    norms: Vec<f64>,
    dim: usize,
    pub metadata: IndexMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

/// Ranked results per query id.
pub type RetrievalRun = BTreeMap<String, Vec<ScoredDoc>>;

impl DocIndex {
    pub fn new(rows: Vec<(String, Vec<f64>)>, metadata: IndexMetadata) -> Result<Self> {
        let Some(dim) = rows.first().map(|(_, v)| v.len()) else {
            return Err(Error::Index("no documents to index".into()));
        };
        if dim == 0 {
            return Err(Error::Index("document vectors have zero dimensions".into()));
        }
        let mut seen = HashSet::with_capacity(rows.len());
        let mut doc_ids = Vec::with_capacity(rows.len());
        let mut matrix = Vec::with_capacity(rows.len() * dim);
        let mut norms = Vec::with_capacity(rows.len());
        for (id, vector) in rows {
            if vector.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: vector.len(),
                });
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::Index(format!(
                    "document `{id}` has a non-finite entry"
                )));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::Index(format!("duplicate document id `{id}`")));
            }
            norms.push(l2_norm(&vector));
            matrix.extend_from_slice(&vector);
            doc_ids.push(id);
        }
        Ok(Self {
            doc_ids,
            matrix,
            norms,
            dim,
            metadata,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    /// Top `k` documents for `query`, scores non-increasing, ties broken by
    /// ascending doc id. `k` larger than the index returns every document.
    pub fn retrieve(&self, query: &[f64], k: usize, score_fn: ScoreFn) -> Result<Vec<ScoredDoc>> {
        if self.is_empty() {
            return Err(Error::Index("index is empty".into()));
        }
        if k == 0 {
            return Err(Error::Invalid("k must be at least 1".into()));
        }
        if query.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: query.len(),
            });
        }
        let query_norm = l2_norm(query);
        if score_fn == ScoreFn::Cosine && query_norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        let mut scored: Vec<(usize, f64)> = (0..self.len())
            .map(|i| {
                let raw = dot(query, self.row(i));
                let score = match score_fn {
                    ScoreFn::Dot => raw,
                    ScoreFn::Cosine if self.norms[i] == 0.0 => 0.0,
                    ScoreFn::Cosine => (raw / (query_norm * self.norms[i])).clamp(-1.0, 1.0),
                };
                // -0.0 would sort below 0.0 under total_cmp and break id tie-breaking
                (i, score + 0.0)
            })
            .collect();
        let order = |a: &(usize, f64), b: &(usize, f64)| -> Ordering {
            b.1.total_cmp(&a.1)
                .then_with(|| self.doc_ids[a.0].cmp(&self.doc_ids[b.0]))
        };
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        Ok(scored
            .into_iter()
            .map(|(i, score)| ScoredDoc {
                doc_id: self.doc_ids[i].clone(),
                score,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta() -> IndexMetadata {
        IndexMetadata {
            source: "test".into(),
            provider: "test".into(),
        }
    }

    fn index(rows: &[(&str, &[f64])]) -> DocIndex {
        DocIndex::new(
            rows.iter()
                .map(|(id, v)| (id.to_string(), v.to_vec()))
                .collect(),
            meta(),
        )
        .unwrap()
    }

    fn ids(results: &[ScoredDoc]) -> Vec<&str> {
        results.iter().map(|r| r.doc_id.as_str()).collect()
    }

    #[test]
    fn exact_match_wins() {
        let idx = index(&[("A", &[1.0, 0.0]), ("B", &[0.0, 1.0])]);
        assert_eq!(
            ids(&idx.retrieve(&[1.0, 0.0], 1, ScoreFn::Cosine).unwrap()),
            ["A"]
        );
    }

    #[test]
    fn k_is_clipped() {
        let idx = index(&[("A", &[1.0, 0.0]), ("B", &[0.0, 1.0]), ("C", &[1.0, 1.0])]);
        assert_eq!(
            idx.retrieve(&[1.0, 0.0], 10, ScoreFn::Cosine)
                .unwrap()
                .len(),
            3
        );
    }

    #[test]
    fn ties_by_doc_id() {
        let idx = index(&[("z", &[1.0, 0.0]), ("a", &[1.0, 0.0]), ("m", &[0.0, 1.0])]);
        assert_eq!(
            ids(&idx.retrieve(&[1.0, 0.0], 3, ScoreFn::Cosine).unwrap()),
            ["a", "z", "m"]
        );
        assert_eq!(
            ids(&idx.retrieve(&[1.0, 0.0], 1, ScoreFn::Cosine).unwrap()),
            ["a"]
        );
    }

    #[test]
    fn invalid_inputs() {
        assert!(DocIndex::new(vec![], meta()).is_err());
        assert!(DocIndex::new(
            vec![("a".into(), vec![1.0]), ("a".into(), vec![2.0])],
            meta()
        )
        .is_err());
        let idx = index(&[("A", &[1.0, 0.0])]);
        assert!(idx.retrieve(&[1.0], 1, ScoreFn::Cosine).is_err());
        assert!(idx.retrieve(&[0.0, 0.0], 1, ScoreFn::Cosine).is_err());
        assert!(idx.retrieve(&[1.0, 0.0], 0, ScoreFn::Cosine).is_err());
    }

    #[test]
    fn dot_product_scoring() {
        let idx = index(&[("A", &[1.0, 0.0]), ("B", &[3.0, 3.0])]);
        let r = idx.retrieve(&[1.0, 0.0], 2, ScoreFn::Dot).unwrap();
        assert_eq!(ids(&r), ["B", "A"]);
        assert_eq!(r[0].score, 3.0);
    }

    fn small_index() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-2i8..=2, 3), 1..12).prop_map(|rows| {
            rows.into_iter()
                .map(|r| r.into_iter().map(f64::from).collect())
                .collect()
        })
    }

    proptest! {
        #[test]
        fn matches_full_sort(rows in small_index(), q in prop::collection::vec(-3i8..=3, 3), k in 1usize..15, exp in -3i32..=6) {
            let q: Vec<f64> = q.into_iter().map(f64::from).collect();
            prop_assume!(l2_norm(&q) > 0.0);
            let idx = DocIndex::new(
                rows.iter().enumerate().map(|(i, v)| (format!("d{i:02}"), v.clone())).collect(),
                meta(),
            ).unwrap();
            let got = idx.retrieve(&q, k, ScoreFn::Cosine).unwrap();

            let mut all: Vec<(String, f64)> = rows.iter().enumerate().map(|(i, v)| {
                let n = l2_norm(v);
                let s = if n == 0.0 { 0.0 } else { (dot(&q, v) / (l2_norm(&q) * n)).clamp(-1.0, 1.0) };
                (format!("d{i:02}"), s)
            }).collect();
            all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            all.truncate(k);
            let got_pairs: Vec<(String, f64)> = got.iter().map(|d| (d.doc_id.clone(), d.score)).collect();
            prop_assert_eq!(got_pairs, all);

            // power-of-two scaling is exact, so even exact score ties must survive it
            let alpha = 2f64.powi(exp);
            let scaled: Vec<f64> = q.iter().map(|x| x * alpha).collect();
            let again = idx.retrieve(&scaled, k, ScoreFn::Cosine).unwrap();
            prop_assert_eq!(ids(&again), ids(&got));
            prop_assert_eq!(idx.retrieve(&q, k, ScoreFn::Cosine).unwrap(), got);
        }
    }
}
