//! Combining the initial query with its reformulations.
//!
//! Three strategies fuse embeddings, all of the form
//!
//! ```text
//! q_agg = w0 * e_init + sum_i weight_i * e_i      (over included refs)
//! ```
//!
//! | strategy | weight_i            | included when          |
//! |----------|---------------------|------------------------|
//! | FW       | (1 - w0) / |refs|   | always                 |
//! | SimDW    | cos(e_init, e_i)    | cos >= sim_threshold   |
//! | ScoreDW  | score_i / 100       | score_i >= threshold   |
//!
//! The fourth, DC, concatenates text with `[SEP]` separators. Fused vectors
//! are not re-normalized; retrieval scores by cosine.

use serde::{Deserialize, Serialize};

use crate::config::AggregationStrategy;
use crate::embedding::{cosine, EmbeddingVector};
use crate::error::{Error, Result};
use crate::llm::ScoreList;

pub const SEP: &str = "[SEP]";

/// Score values live on a 1..=100 scale; weights use score / SCORE_SCALE.
pub const SCORE_SCALE: f64 = 100.0;

/// A query text together with its embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedded {
    pub text: String,
    pub embedding: EmbeddingVector,
}

impl Embedded {
    pub fn new(text: impl Into<String>, embedding: EmbeddingVector) -> Self {
        Self {
            text: text.into(),
            embedding,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inclusion {
    Passed,
    BelowThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleEntry {
    pub text: String,
    /// Similarity or raw score the filter looked at; absent for DC and FW.
    pub signal: Option<f64>,
    pub weight: f64,
    pub included: bool,
    pub reason: Inclusion,
    #[serde(skip)]
    pub embedding: Option<EmbeddingVector>,
}

/// Audit trail of how every reformulation was weighted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedQueryBundle {
    pub init: String,
    pub w0: f64,
    pub entries: Vec<BundleEntry>,
}

impl WeightedQueryBundle {
    pub fn included(&self) -> impl Iterator<Item = &BundleEntry> {
        self.entries.iter().filter(|e| e.included)
    }

    pub fn included_count(&self) -> usize {
        self.included().count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fused {
    Embedding(EmbeddingVector),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedQuery {
    pub fused: Fused,
    pub strategy: AggregationStrategy,
    pub bundle: WeightedQueryBundle,
}

impl AggregatedQuery {
    pub fn embedding(&self) -> Option<&EmbeddingVector> {
        match &self.fused {
            Fused::Embedding(e) => Some(e),
            Fused::Text(_) => None,
        }
    }

    pub fn text(&self) -> Option<&str> {
        match &self.fused {
            Fused::Text(t) => Some(t),
            Fused::Embedding(_) => None,
        }
    }
}

fn check_w0(w0: f64) -> Result<()> {
    if (0.0..=1.0).contains(&w0) {
        Ok(())
    } else {
        Err(Error::Invalid(format!("w0 = {w0} is outside [0, 1]")))
    }
}

fn check_dims(init: &Embedded, refs: &[Embedded]) -> Result<()> {
    let expected = init.embedding.dim();
    match refs.iter().find(|r| r.embedding.dim() != expected) {
        Some(r) => Err(Error::Dimension {
            expected,
            found: r.embedding.dim(),
        }),
        None => Ok(()),
    }
}

/// `w0 * e_init + sum of weight * embedding` over the included entries.
fn weighted_sum(init: &EmbeddingVector, w0: f64, entries: &[BundleEntry]) -> EmbeddingVector {
    let mut acc: Vec<f64> = init.values().iter().map(|x| w0 * x).collect();
    for entry in entries.iter().filter(|e| e.included) {
        let e = entry
            .embedding
            .as_ref()
            .expect("weighted entries carry embeddings");
        for (a, x) in acc.iter_mut().zip(e.values()) {
            *a += entry.weight * x;
        }
    }
    EmbeddingVector::from_sum(acc)
}

fn embedding_result(
    strategy: AggregationStrategy,
    init: &Embedded,
    w0: f64,
    entries: Vec<BundleEntry>,
) -> AggregatedQuery {
    let fused = weighted_sum(&init.embedding, w0, &entries);
    AggregatedQuery {
        fused: Fused::Embedding(fused),
        strategy,
        bundle: WeightedQueryBundle {
            init: init.text.clone(),
            w0,
            entries,
        },
    }
}

/// Direct concatenation: `init [SEP] r1 [SEP] r2 [SEP]`, or the bare
/// initial query when there are no reformulations.
pub fn aggregate_dc(init: &str, refs: &[String]) -> AggregatedQuery {
    let mut text = init.to_string();
    for r in refs {
        text.push(' ');
        text.push_str(SEP);
        text.push(' ');
        text.push_str(r);
    }
    if !refs.is_empty() {
        text.push(' ');
        text.push_str(SEP);
    }
    let entries = refs
        .iter()
        .map(|r| BundleEntry {
            text: r.clone(),
            signal: None,
            weight: 1.0,
            included: true,
            reason: Inclusion::Passed,
            embedding: None,
        })
        .collect();
    AggregatedQuery {
        fused: Fused::Text(text),
        strategy: AggregationStrategy::Dc,
        bundle: WeightedQueryBundle {
            init: init.to_string(),
            w0: 1.0,
            entries,
        },
    }
}

/// Splits a DC string back into `[init, refs...]`.
pub fn split_dc(text: &str) -> Vec<String> {
    text.split(SEP)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Fixed weights: every reformulation gets `(1 - w0) / |refs|`.
pub fn aggregate_fw(init: &Embedded, refs: &[Embedded], w0: f64) -> Result<AggregatedQuery> {
    check_w0(w0)?;
    check_dims(init, refs)?;
    let weight = if refs.is_empty() {
        0.0
    } else {
        (1.0 - w0) / refs.len() as f64
    };
    let entries = refs
        .iter()
        .map(|r| BundleEntry {
            text: r.text.clone(),
            signal: None,
            weight,
            included: true,
            reason: Inclusion::Passed,
            embedding: Some(r.embedding.clone()),
        })
        .collect();
    Ok(embedding_result(AggregationStrategy::Fw, init, w0, entries))
}

/// Similarity dynamic weights: refs with `cos(e_init, e_i) >= sim_threshold`
/// contribute with weight equal to that cosine.
pub fn aggregate_simdw(
    init: &Embedded,
    refs: &[Embedded],
    w0: f64,
    sim_threshold: f64,
) -> Result<AggregatedQuery> {
    check_w0(w0)?;
    check_dims(init, refs)?;
    if init.embedding.norm() == 0.0 {
        return Err(Error::ZeroVector);
    }
    let entries = refs
        .iter()
        .map(|r| {
            let sim = cosine(&init.embedding, &r.embedding)?;
            let included = sim >= sim_threshold;
            Ok(BundleEntry {
                text: r.text.clone(),
                signal: Some(sim),
                weight: sim,
                included,
                reason: if included {
                    Inclusion::Passed
                } else {
                    Inclusion::BelowThreshold
                },
                embedding: Some(r.embedding.clone()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(embedding_result(
        AggregationStrategy::SimDw,
        init,
        w0,
        entries,
    ))
}

/// Score dynamic weights: refs whose raw score reaches `score_threshold`
/// contribute with weight `score / 100`.
pub fn aggregate_scoredw(
    init: &Embedded,
    refs: &[Embedded],
    scores: &ScoreList,
    w0: f64,
    score_threshold: f64,
) -> Result<AggregatedQuery> {
    check_w0(w0)?;
    check_dims(init, refs)?;
    if scores.len() != refs.len() {
        return Err(Error::Invalid(format!(
            "{} scores for {} reformulations",
            scores.len(),
            refs.len()
        )));
    }
    let entries = refs
        .iter()
        .zip(scores.values())
        .map(|(r, &score)| {
            let included = score >= score_threshold;
            BundleEntry {
                text: r.text.clone(),
                signal: Some(score),
                weight: score / SCORE_SCALE,
                included,
                reason: if included {
                    Inclusion::Passed
                } else {
                    Inclusion::BelowThreshold
                },
                embedding: Some(r.embedding.clone()),
            }
        })
        .collect();
    Ok(embedding_result(
        AggregationStrategy::ScoreDw,
        init,
        w0,
        entries,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(text: &str, values: &[f64]) -> Embedded {
        Embedded::new(text, EmbeddingVector::new(values.to_vec()).unwrap())
    }

    fn fused(q: &AggregatedQuery) -> Vec<f64> {
        q.embedding().unwrap().values().to_vec()
    }

    #[test]
    fn dc_layout() {
        let refs = vec!["b".to_string(), "c".to_string()];
        assert_eq!(
            aggregate_dc("a", &refs).text(),
            Some("a [SEP] b [SEP] c [SEP]")
        );
        assert_eq!(aggregate_dc("a", &[]).text(), Some("a"));
        assert_eq!(
            aggregate_dc("q", &["r".to_string()]).text(),
            Some("q [SEP] r [SEP]")
        );
    }

    #[test]
    fn dc_round_trip() {
        let refs = vec!["b x".to_string(), "c".to_string()];
        let text = aggregate_dc("a", &refs);
        assert_eq!(split_dc(text.text().unwrap()), ["a", "b x", "c"]);
    }

    #[test]
    fn fw_weights() {
        let init = e("q", &[1.0, 0.0]);
        let two = [e("a", &[0.0, 1.0]), e("b", &[0.0, 1.0])];
        let q = aggregate_fw(&init, &two, 0.7).unwrap();
        assert!(q
            .bundle
            .entries
            .iter()
            .all(|x| x.weight == (1.0 - 0.7) / 2.0));
        assert!((q.bundle.entries[0].weight - 0.15).abs() < 1e-15);
        let three = [
            e("a", &[0.0, 1.0]),
            e("b", &[0.0, 1.0]),
            e("c", &[1.0, 1.0]),
        ];
        let q = aggregate_fw(&init, &three, 0.7).unwrap();
        assert!((q.bundle.entries[0].weight - 0.1).abs() < 1e-15);
        let q = aggregate_fw(&init, &three, 1.0).unwrap();
        assert_eq!(fused(&q), [1.0, 0.0]);
        assert_eq!(fused(&aggregate_fw(&init, &[], 0.7).unwrap()), [0.7, 0.0]);
    }

    #[test]
    fn simdw_examples() {
        let init = e("q", &[1.0, 0.0]);
        assert_eq!(
            fused(&aggregate_simdw(&init, &[], 0.7, 0.2).unwrap()),
            [0.7, 0.0]
        );

        let q = aggregate_simdw(&init, &[e("r", &[0.0, 1.0])], 0.7, 0.2).unwrap();
        assert_eq!(fused(&q), [0.7, 0.0]);
        assert_eq!(q.bundle.entries[0].reason, Inclusion::BelowThreshold);

        let q = aggregate_simdw(&init, &[e("r", &[1.0, 0.0])], 0.7, 0.2).unwrap();
        assert_eq!(fused(&q), [1.7, 0.0]);
        assert!(q.bundle.entries[0].included);
    }

    #[test]
    fn simdw_rejects_zero_init() {
        let init = e("q", &[0.0, 0.0]);
        assert!(matches!(
            aggregate_simdw(&init, &[e("r", &[1.0, 0.0])], 0.7, 0.2),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn scoredw_examples() {
        let init = e("q", &[1.0, 0.0]);
        let empty = ScoreList(vec![]);
        assert_eq!(
            fused(&aggregate_scoredw(&init, &[], &empty, 0.7, 60.0).unwrap()),
            [0.7, 0.0]
        );

        let q = aggregate_scoredw(
            &init,
            &[e("r", &[0.0, 1.0])],
            &ScoreList(vec![80.0]),
            0.7,
            60.0,
        )
        .unwrap();
        assert_eq!(fused(&q), [0.7, 0.8]);

        let q = aggregate_scoredw(
            &init,
            &[e("r", &[0.0, 1.0])],
            &ScoreList(vec![50.0]),
            0.7,
            60.0,
        )
        .unwrap();
        assert!(!q.bundle.entries[0].included);
        assert_eq!(fused(&q), [0.7, 0.0]);

        assert!(aggregate_scoredw(&init, &[e("r", &[0.0, 1.0])], &empty, 0.7, 60.0).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let init = e("q", &[1.0, 0.0]);
        assert!(matches!(
            aggregate_fw(&init, &[e("r", &[1.0, 0.0, 0.0])], 0.7),
            Err(Error::Dimension {
                expected: 2,
                found: 3
            })
        ));
    }

    #[test]
    fn bundle_serializes_without_embeddings() {
        let init = e("q", &[1.0, 0.0]);
        let q = aggregate_simdw(&init, &[e("r", &[1.0, 1.0])], 0.7, 0.2).unwrap();
        let json = serde_json::to_value(&q.bundle).unwrap();
        assert_eq!(json["entries"][0]["reason"], "passed");
        assert!(json["entries"][0].get("embedding").is_none());
    }
}
