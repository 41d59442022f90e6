//! Relevance judgments, nDCG reports, significance tests and cluster statistics.

pub mod clusters;
pub mod ndcg;
pub mod stats;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Gain;
use crate::error::{Error, Result};
use crate::retrieval::RetrievalRun;

pub use clusters::{cluster_stats, ClusterStats};
pub use ndcg::ndcg_at_k;
pub use stats::{
    holm_adjust, paired_t_test, paired_ttest_holm, Comparison, PairedTTest, TTestOutcome,
};

/// query id -> doc id -> grade.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Qrels(pub HashMap<String, HashMap<String, u32>>);

impl Qrels {
    pub fn get(&self, qid: &str) -> Option<&HashMap<String, u32>> {
        self.0.get(qid)
    }

    pub fn insert(&mut self, qid: impl Into<String>, doc: impl Into<String>, grade: u32) {
        self.0
            .entry(qid.into())
            .or_default()
            .insert(doc.into(), grade);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Parses BEIR TSV (`query-id corpus-id score`, optional header) or
    /// four-column TREC qrels (`qid iter docid grade`).
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut qrels = Qrels::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            let (qid, doc, grade) = match cols.as_slice() {
                [q, d, g] => (*q, *d, *g),
                [q, _, d, g] => (*q, *d, *g),
                _ => {
                    return Err(Error::format(
                        path,
                        i + 1,
                        format!("expected 3 or 4 columns, found {}", cols.len()),
                    ))
                }
            };
            let grade: i64 = match grade.parse() {
                Ok(g) => g,
                Err(_) if i == 0 => continue, // header
                Err(_) => return Err(Error::format(path, i + 1, format!("bad grade `{grade}`"))),
            };
            if grade < 0 {
                return Err(Error::format(
                    path,
                    i + 1,
                    format!("negative grade {grade}"),
                ));
            }
            let grade = u32::try_from(grade)
                .map_err(|_| Error::format(path, i + 1, format!("grade {grade} too large")))?;
            qrels.insert(qid, doc, grade);
        }
        Ok(qrels)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub run_tag: String,
    pub k: usize,
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
    /// Run queries left out of the mean because they have no judgments.
    pub excluded: Vec<String>,
}

impl MetricReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("query_id,ndcg@{}\n", self.k);
        for (qid, v) in &self.per_query {
            writeln!(out, "{qid},{v:.6}").expect("writing to a String");
        }
        out
    }
}

/// nDCG@k for every run query that has a non-empty qrels row.
pub fn evaluate_run(
    run: &RetrievalRun,
    qrels: &Qrels,
    k: usize,
    gain: Gain,
    run_tag: &str,
) -> MetricReport {
    let mut per_query = BTreeMap::new();
    let mut excluded = Vec::new();
    for (qid, docs) in run {
        match qrels.get(qid) {
            Some(row) if !row.is_empty() => {
                let ranked: Vec<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
                per_query.insert(qid.clone(), ndcg_at_k(&ranked, row, k, gain));
            }
            _ => excluded.push(qid.clone()),
        }
    }
    let mean = if per_query.is_empty() {
        0.0
    } else {
        per_query.values().sum::<f64>() / per_query.len() as f64
    };
    MetricReport {
        run_tag: run_tag.to_string(),
        k,
        per_query,
        mean,
        excluded,
    }
}
