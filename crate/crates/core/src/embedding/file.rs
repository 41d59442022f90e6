//! JSONL `{id, vector}` files for embeddings computed outside this crate.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cache::write_atomic;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub vector: Vec<f64>,
}

/// Reads every record, enforcing one dimension across the file.
pub fn read_embeddings_jsonl(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut dim = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: EmbeddingRecord =
            serde_json::from_str(line).map_err(|e| Error::format(path, i + 1, e.to_string()))?;
        if record.vector.is_empty() || record.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(
                path,
                i + 1,
                format!("vector for `{}` is empty or non-finite", record.id),
            ));
        }
        match dim {
            None => dim = Some(record.vector.len()),
            Some(d) if d != record.vector.len() => {
                return Err(Error::format(
                    path,
                    i + 1,
                    format!(
                        "vector for `{}` has dimension {}, earlier vectors have {d}",
                        record.id,
                        record.vector.len()
                    ),
                ))
            }
            Some(_) => {}
        }
        records.push(record);
    }
    Ok(records)
}

pub fn write_embeddings_jsonl(path: &Path, records: &[EmbeddingRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r)?).expect("writing to a String");
    }
    write_atomic(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_dims_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"vector\":[1,0]}\n{\"id\":\"b\",\"vector\":[1,0,0]}\n",
        )
        .unwrap();
        assert!(matches!(
            read_embeddings_jsonl(&path),
            Err(Error::Format { line: 2, .. })
        ));
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        let records = vec![
            EmbeddingRecord {
                id: "a".into(),
                vector: vec![0.25, -1.5],
            },
            EmbeddingRecord {
                id: "b".into(),
                vector: vec![1.0, 0.0],
            },
        ];
        write_embeddings_jsonl(&path, &records).unwrap();
        assert_eq!(read_embeddings_jsonl(&path).unwrap(), records);
    }
}
