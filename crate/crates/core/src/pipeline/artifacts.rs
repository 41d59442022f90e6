//! Per-stage JSONL records, so each stage can resume from the previous one.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::aggregation::WeightedQueryBundle;
use crate::cache::write_atomic;
use crate::config::AggregationStrategy;
use crate::error::{Error, Result};
use crate::llm::ScoreList;
use crate::types::{ClusterSet, ReformulatedQuery};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedRecord {
    pub qid: String,
    pub query: String,
    pub iteration: usize,
    pub reformulations: Vec<ReformulatedQuery>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub qid: String,
    pub query: String,
    pub iteration: usize,
    pub clusters: ClusterSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub qid: String,
    pub iteration: usize,
    pub scores: ScoreList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub qid: String,
    pub strategy: AggregationStrategy,
    pub bundle: WeightedQueryBundle,
    pub fused_text: Option<String>,
    /// Retrieval vector; DC text is embedded.
    pub vector: Vec<f64>,
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_atomic(path, to_jsonl(items)?.as_bytes())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::format(path, i + 1, e.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cluster_records_round_trip_and_validate() {
        let rec = ClusterRecord {
            qid: "q1".into(),
            query: "fever".into(),
            iteration: 0,
            clusters: ClusterSet::new(vec!["a".into(), "b".into()], 0).unwrap(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clusters.jsonl");
        write_jsonl(&path, std::slice::from_ref(&rec)).unwrap();
        assert_eq!(read_jsonl::<ClusterRecord>(&path).unwrap(), [rec]);

        std::fs::write(
            &path,
            r#"{"qid":"q","query":"x","iteration":0,"clusters":{"clusters":[],"source_iteration":0}}"#,
        )
        .unwrap();
        assert!(read_jsonl::<ClusterRecord>(&path).is_err());
    }
}
