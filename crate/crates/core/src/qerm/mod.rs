//! Query evaluation reward model: nDCG-labelled training data, a pluggable
//! quality classifier and the bounded regeneration loop it gates.

pub mod model;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::write_atomic;
use crate::config::Gain;
use crate::embedding::{cosine, EmbeddingService, EmbeddingVector};
use crate::error::{Error, Result};
use crate::evaluation::{ndcg_at_k, Qrels};
use crate::retrieval::ScoredDoc;
use crate::types::{ClusterSet, Query, MAX_CLUSTERS};

pub use model::{infer_logit, loss_and_gradient, sigmoid, train, QermModel, TrainingMetadata};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QermExample {
    pub qid: String,
    pub features: Vec<f64>,
    pub label: u8,
    pub ndcg: f64,
}

/// 1 when the query's nDCG reaches `tau`, 0 when it falls strictly below.
pub fn label_for(ndcg: f64, tau: f64) -> u8 {
    u8::from(ndcg >= tau)
}

/// Feature length for embeddings of dimension `d`.
pub fn feature_dim(d: usize) -> usize {
    3 * d + 2
}

/// `[e_init; mean(e_c); |e_init - mean(e_c)|; mean cos(e_init, e_c); count / 3]`.
pub fn featurize(init: &EmbeddingVector, clusters: &[EmbeddingVector]) -> Result<Vec<f64>> {
    if clusters.is_empty() || clusters.len() > MAX_CLUSTERS {
        return Err(Error::Invalid(format!(
            "expected 1 to {MAX_CLUSTERS} cluster embeddings, got {}",
            clusters.len()
        )));
    }
    let d = init.dim();
    let n = clusters.len() as f64;
    let mut mean = vec![0.0; d];
    let mut cos_sum = 0.0;
    for c in clusters {
        if c.dim() != d {
            return Err(Error::Dimension {
                expected: d,
                found: c.dim(),
            });
        }
        for (m, x) in mean.iter_mut().zip(c.values()) {
            *m += x;
        }
        cos_sum += cosine(init, c)?;
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut features = Vec::with_capacity(feature_dim(d));
    features.extend_from_slice(init.values());
    features.extend_from_slice(&mean);
    features.extend(init.values().iter().zip(&mean).map(|(a, b)| (a - b).abs()));
    features.push(cos_sum / n);
    features.push(n / MAX_CLUSTERS as f64);
    Ok(features)
}

pub fn featurize_query(
    query: &Query,
    clusters: &ClusterSet,
    embedder: &EmbeddingService,
) -> Result<Vec<f64>> {
    let init = embedder.embed_one(&query.text)?;
    let vectors = embedder.embed(clusters.clusters())?;
    featurize(&init, &vectors)
}

/// Maps a feature vector to a quality score in (0, 1).
pub trait QualityClassifier: Send + Sync {
    fn feature_dim(&self) -> usize;

    fn logit(&self, features: &[f64]) -> Result<f64>;
}

pub fn compute_epsilon(first_iteration_logits: &[f64]) -> Result<f64> {
    if first_iteration_logits.is_empty() {
        return Err(Error::Qerm(
            "epsilon needs at least one first-pass logit".into(),
        ));
    }
    Ok(first_iteration_logits.iter().sum::<f64>() / first_iteration_logits.len() as f64)
}

/// One pass of generation, clustering, aggregation and retrieval.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopIteration<T> {
    pub clusters: ClusterSet,
    pub features: Vec<f64>,
    pub results: Vec<ScoredDoc>,
    pub detail: T,
}

/// Something that can run the per-query pipeline at a given loop timestep.
pub trait QermPipeline: Sync {
    type Detail: Send;

    fn iterate(&self, query: &Query, iteration: usize) -> Result<LoopIteration<Self::Detail>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Regenerate,
    /// Below epsilon with no regenerations left.
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopStep {
    pub t: usize,
    pub clusters: ClusterSet,
    pub logit: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Accepted {
        iteration: usize,
    },
    /// Every logit stayed below epsilon; the highest-scoring iteration is returned.
    Exhausted {
        best_iteration: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopState {
    pub qid: String,
    pub t: usize,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub history: Vec<LoopStep>,
    pub outcome: Option<Outcome>,
}

impl LoopState {
    pub fn regenerations(&self) -> usize {
        self.history
            .iter()
            .filter(|s| s.decision == Decision::Regenerate)
            .count()
    }
}

#[derive(Debug)]
pub struct LoopResult<T> {
    pub state: LoopState,
    pub chosen: LoopIteration<T>,
}

#[derive(Debug, thiserror::Error)]
#[error("feedback loop for `{}` failed at t={}: {error}", .state.qid, .state.t)]
pub struct LoopFailure {
    pub state: Box<LoopState>,
    pub error: Error,
}

/// Scores the current cluster set and regenerates while the score is below
/// `epsilon` and fewer than `max_iterations` regenerations have happened.
/// The iteration reached after the last regeneration is scored too; if it
/// is still below `epsilon`, the best-scoring iteration (earliest on ties)
/// is returned.
pub fn feedback_loop<P: QermPipeline>(
    query: &Query,
    pipeline: &P,
    classifier: &dyn QualityClassifier,
    epsilon: f64,
    max_iterations: usize,
) -> std::result::Result<LoopResult<P::Detail>, LoopFailure> {
    let mut state = LoopState {
        qid: query.id.clone(),
        t: 0,
        epsilon,
        max_iterations,
        history: Vec::new(),
        outcome: None,
    };
    let mut best: Option<(f64, usize, LoopIteration<P::Detail>)> = None;
    loop {
        let step = pipeline
            .iterate(query, state.t)
            .and_then(|it| classifier.logit(&it.features).map(|logit| (logit, it)));
        let (logit, current) = match step {
            Ok(v) => v,
            Err(error) => {
                return Err(LoopFailure {
                    state: Box::new(state),
                    error,
                })
            }
        };
        let decision = if logit >= epsilon {
            Decision::Accept
        } else if state.t < max_iterations {
            Decision::Regenerate
        } else {
            Decision::Stop
        };
        state.history.push(LoopStep {
            t: state.t,
            clusters: current.clusters.clone(),
            logit,
            decision,
        });
        match decision {
            Decision::Accept => {
                state.outcome = Some(Outcome::Accepted { iteration: state.t });
                return Ok(LoopResult {
                    state,
                    chosen: current,
                });
            }
            Decision::Regenerate => {
                if best.as_ref().is_none_or(|(b, _, _)| logit > *b) {
                    best = Some((logit, state.t, current));
                }
                state.t += 1;
            }
            Decision::Stop => {
                if best.as_ref().is_none_or(|(b, _, _)| logit > *b) {
                    best = Some((logit, state.t, current));
                }
                let (_, best_iteration, chosen) = best.expect("at least one iteration scored");
                state.outcome = Some(Outcome::Exhausted { best_iteration });
                return Ok(LoopResult { state, chosen });
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub examples: Vec<QermExample>,
    /// (query id, reason) for queries that produced no example.
    pub skipped: Vec<(String, String)>,
}

impl TrainingSet {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for ex in &self.examples {
            out.push_str(&serde_json::to_string(ex)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_jsonl()?.as_bytes())
    }

    pub fn read_jsonl(path: &Path) -> Result<Vec<QermExample>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::format(path, i + 1, e.to_string()))
            })
            .collect()
    }
}

/// Runs the first pass for every query and labels it against `tau`.
/// Queries without judgments or with a failing pipeline are skipped.
pub fn build_training_set<P: QermPipeline>(
    queries: &[Query],
    pipeline: &P,
    qrels: &Qrels,
    k: usize,
    gain: Gain,
    tau: f64,
) -> TrainingSet {
    let rows: Vec<std::result::Result<QermExample, (String, String)>> = queries
        .par_iter()
        .map(|q| {
            let judgments = match qrels.get(&q.id) {
                Some(j) if !j.is_empty() => j,
                _ => return Err((q.id.clone(), "no relevance judgments".to_string())),
            };
            let it = pipeline
                .iterate(q, 0)
                .map_err(|e| (q.id.clone(), e.to_string()))?;
            let ranked: Vec<&str> = it.results.iter().map(|d| d.doc_id.as_str()).collect();
            let ndcg = ndcg_at_k(&ranked, judgments, k, gain);
            Ok(QermExample {
                qid: q.id.clone(),
                features: it.features,
                label: label_for(ndcg, tau),
                ndcg,
            })
        })
        .collect();
    let mut set = TrainingSet::default();
    for row in rows {
        match row {
            Ok(ex) => set.examples.push(ex),
            Err(skip) => {
                log::warn!("skipping query `{}`: {}", skip.0, skip.1);
                set.skipped.push(skip);
            }
        }
    }
    set
}
