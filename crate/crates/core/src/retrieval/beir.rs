//! BEIR-style `corpus.jsonl` / `queries.jsonl` readers and index ingestion.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{DocIndex, IndexMetadata};
use crate::embedding::read_embeddings_jsonl;
use crate::error::{Error, Result};
use crate::types::Query;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusDoc {
    pub id: String,
    pub title: String,
    pub text: String,
}

/// BEIR ids are usually strings but some datasets store bare numbers.
fn id_field(value: Option<&Value>) -> Option<String> {
    match value? {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn string_field(obj: &Value, key: &str) -> String {
    obj.get(key)
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string()
}

fn read_jsonl_objects(path: &Path) -> Result<Vec<(usize, Value)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str::<Value>(line)
                .map(|v| (i + 1, v))
                .map_err(|e| Error::format(path, i + 1, e.to_string()))
        })
        .collect()
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusDoc>> {
    read_jsonl_objects(path)?
        .into_iter()
        .map(|(line, obj)| {
            let id = id_field(obj.get("_id"))
                .ok_or_else(|| Error::format(path, line, "document without `_id`"))?;
            Ok(CorpusDoc {
                id,
                title: string_field(&obj, "title"),
                text: string_field(&obj, "text"),
            })
        })
        .collect()
}

pub fn read_queries(path: &Path) -> Result<Vec<Query>> {
    let queries = read_jsonl_objects(path)?
        .into_iter()
        .map(|(line, obj)| {
            let id = id_field(obj.get("_id"))
                .ok_or_else(|| Error::format(path, line, "query without `_id`"))?;
            Query::new(id, string_field(&obj, "text"))
                .map_err(|e| Error::format(path, line, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = queries.iter().find(|q| !seen.insert(q.id.as_str())) {
        return Err(Error::Invalid(format!(
            "{}: duplicate query id `{}`",
            path.display(),
            dup.id
        )));
    }
    Ok(queries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub corpus_docs: usize,
    pub vectors: usize,
    pub indexed: usize,
    /// Corpus documents with no vector.
    pub missing_embeddings: usize,
    /// Vectors whose id is not in the corpus.
    pub orphan_vectors: usize,
}

/// Builds an index over documents present in both the corpus and the
/// embeddings file, in corpus order.
pub fn ingest_corpus(
    corpus_path: &Path,
    embeddings_path: &Path,
    provider_id: &str,
) -> Result<(DocIndex, IngestReport)> {
    let corpus = read_corpus(corpus_path)?;
    let records = read_embeddings_jsonl(embeddings_path)?;
    let vectors = records.len();
    let mut by_id: HashMap<String, Vec<f64>> = HashMap::with_capacity(records.len());
    for r in records {
        if by_id.insert(r.id.clone(), r.vector).is_some() {
            return Err(Error::Index(format!(
                "{}: duplicate vector id `{}`",
                embeddings_path.display(),
                r.id
            )));
        }
    }
    let corpus_docs = corpus.len();
    let mut rows = Vec::with_capacity(corpus.len());
    let mut missing = 0;
    for doc in corpus {
        match by_id.remove(&doc.id) {
            Some(v) => rows.push((doc.id, v)),
            None => missing += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::Index(format!(
            "no document in {} has a vector in {}",
            corpus_path.display(),
            embeddings_path.display()
        )));
    }
    if missing > 0 {
        log::warn!("{missing} corpus document(s) have no embedding and are not indexed");
    }
    let report = IngestReport {
        corpus_docs,
        vectors,
        indexed: rows.len(),
        missing_embeddings: missing,
        orphan_vectors: by_id.len(),
    };
    let index = DocIndex::new(
        rows,
        IndexMetadata {
            source: corpus_path.display().to_string(),
            provider: provider_id.to_string(),
        },
    )?;
    Ok((index, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    const CORPUS: &str = r#"{"_id": "d1", "title": "A", "text": "alpha"}
{"_id": "d2", "title": "B", "text": "beta"}
{"_id": 3, "title": "C", "text": "gamma"}
"#;

    #[test]
    fn full_intersection() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "corpus.jsonl", CORPUS);
        let e = write(
            dir.path(),
            "emb.jsonl",
            "{\"id\":\"d1\",\"vector\":[1,0]}\n{\"id\":\"d2\",\"vector\":[0,1]}\n{\"id\":\"3\",\"vector\":[1,1]}\n",
        );
        let (index, report) = ingest_corpus(&c, &e, "p").unwrap();
        assert_eq!(index.len(), 3);
        assert_eq!(report.missing_embeddings, 0);
        assert_eq!(index.doc_ids(), ["d1", "d2", "3"]);
    }

    #[test]
    fn partial_intersection_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "corpus.jsonl", CORPUS);
        let e = write(
            dir.path(),
            "emb.jsonl",
            "{\"id\":\"d1\",\"vector\":[1,0]}\n{\"id\":\"d2\",\"vector\":[0,1]}\n",
        );
        let (index, report) = ingest_corpus(&c, &e, "p").unwrap();
        assert_eq!(index.len(), 2);
        assert_eq!(report.missing_embeddings, 1);
    }

    #[test]
    fn mixed_dims_and_empty_intersection_fail() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "corpus.jsonl", CORPUS);
        let mixed = write(
            dir.path(),
            "mixed.jsonl",
            "{\"id\":\"d1\",\"vector\":[1,0]}\n{\"id\":\"d2\",\"vector\":[0,1,0]}\n",
        );
        assert!(ingest_corpus(&c, &mixed, "p").is_err());
        let disjoint = write(
            dir.path(),
            "disjoint.jsonl",
            "{\"id\":\"x\",\"vector\":[1,0]}\n",
        );
        assert!(matches!(
            ingest_corpus(&c, &disjoint, "p"),
            Err(Error::Index(_))
        ));
    }

    #[test]
    fn queries_require_text() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write(
            dir.path(),
            "q.jsonl",
            "{\"_id\":\"q1\",\"text\":\"fever\",\"metadata\":{}}\n",
        );
        assert_eq!(read_queries(&ok).unwrap()[0].text, "fever");
        let blank = write(dir.path(), "b.jsonl", "{\"_id\":\"q1\",\"text\":\" \"}\n");
        assert!(read_queries(&blank).is_err());
        let dup = write(
            dir.path(),
            "d.jsonl",
            "{\"_id\":\"q1\",\"text\":\"a\"}\n{\"_id\":\"q1\",\"text\":\"b\"}\n",
        );
        assert!(read_queries(&dup).is_err());
    }
}
