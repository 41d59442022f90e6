//! A BEIR-layout dataset directory.
//!
//! ```text
//! corpus.jsonl
//! queries.jsonl
//! qrels/test.tsv            (or qrels.tsv)
//! corpus_embeddings.jsonl   (optional; otherwise the corpus is embedded)
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::embedding::EmbeddingService;
use crate::error::{Error, Result};
use crate::evaluation::Qrels;
use crate::retrieval::{
    ingest_corpus, read_corpus, read_queries, DocIndex, IndexMetadata, IngestReport,
};
use crate::types::Query;

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const QUERIES_FILE: &str = "queries.jsonl";
pub const EMBEDDINGS_FILE: &str = "corpus_embeddings.jsonl";

pub struct Dataset {
    pub dir: PathBuf,
    pub queries: Vec<Query>,
    pub qrels: Qrels,
    pub qrels_path: PathBuf,
    pub index: Arc<DocIndex>,
    pub ingest: IngestReport,
}

pub fn qrels_path(dir: &Path) -> Result<PathBuf> {
    [dir.join("qrels").join("test.tsv"), dir.join("qrels.tsv")]
        .into_iter()
        .find(|p| p.is_file())
        .ok_or_else(|| Error::Invalid(format!("{}: no qrels/test.tsv or qrels.tsv", dir.display())))
}

/// Text embedded for a corpus document when no vectors are supplied.
pub fn document_text(title: &str, text: &str) -> String {
    match (title.trim(), text.trim()) {
        ("", t) => t.to_string(),
        (h, "") => h.to_string(),
        (h, t) => format!("{h} {t}"),
    }
}

impl Dataset {
    pub fn load(dir: &Path, embedder: &EmbeddingService) -> Result<Self> {
        let queries = read_queries(&dir.join(QUERIES_FILE))?;
        let qrels_path = qrels_path(dir)?;
        let qrels = Qrels::read(&qrels_path)?;
        let corpus_path = dir.join(CORPUS_FILE);
        let embeddings_path = dir.join(EMBEDDINGS_FILE);
        let (index, ingest) = if embeddings_path.is_file() {
            ingest_corpus(&corpus_path, &embeddings_path, embedder.provider_id())?
        } else {
            let docs = read_corpus(&corpus_path)?;
            if docs.is_empty() {
                return Err(Error::Index(format!("{} is empty", corpus_path.display())));
            }
            let texts: Vec<String> = docs
                .iter()
                .map(|d| document_text(&d.title, &d.text))
                .collect();
            let vectors = embedder.embed(&texts)?;
            let rows = docs
                .into_iter()
                .zip(vectors)
                .map(|(d, v)| (d.id, v.into_values()))
                .collect::<Vec<_>>();
            let n = rows.len();
            let index = DocIndex::new(
                rows,
                IndexMetadata {
                    source: corpus_path.display().to_string(),
                    provider: embedder.provider_id().to_string(),
                },
            )?;
            let report = IngestReport {
                corpus_docs: n,
                vectors: n,
                indexed: n,
                missing_embeddings: 0,
                orphan_vectors: 0,
            };
            (index, report)
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            queries,
            qrels,
            qrels_path,
            index: Arc::new(index),
            ingest,
        })
    }
}
