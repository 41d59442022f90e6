//! TREC run files: `qid Q0 docid rank score tag`, one line per result.

use std::fmt::Write as _;
use std::path::Path;

use super::{RetrievalRun, ScoredDoc};
use crate::cache::write_atomic;
use crate::error::{Error, Result};

pub fn format_run(run: &RetrievalRun, tag: &str) -> String {
    let mut out = String::new();
    for (qid, docs) in run {
        for (rank, doc) in docs.iter().enumerate() {
            writeln!(
                out,
                "{qid} Q0 {} {} {:.8} {tag}",
                doc.doc_id,
                rank + 1,
                doc.score
            )
            .expect("writing to a String");
        }
    }
    out
}

pub fn write_run(path: &Path, run: &RetrievalRun, tag: &str) -> Result<()> {
    write_atomic(path, format_run(run, tag).as_bytes())
}

/// Parses a run, keeping each query's results in file rank order.
pub fn parse_run(text: &str, path: &Path) -> Result<RetrievalRun> {
    let mut rows: std::collections::BTreeMap<String, Vec<(usize, ScoredDoc)>> = Default::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(Error::format(
                path,
                i + 1,
                format!("expected 6 columns, found {}", cols.len()),
            ));
        }
        let rank: usize = cols[3]
            .parse()
            .map_err(|_| Error::format(path, i + 1, format!("bad rank `{}`", cols[3])))?;
        let score: f64 = cols[4]
            .parse()
            .map_err(|_| Error::format(path, i + 1, format!("bad score `{}`", cols[4])))?;
        rows.entry(cols[0].to_string()).or_default().push((
            rank,
            ScoredDoc {
                doc_id: cols[2].to_string(),
                score,
            },
        ));
    }
    Ok(rows
        .into_iter()
        .map(|(qid, mut docs)| {
            docs.sort_by_key(|(rank, _)| *rank);
            (qid, docs.into_iter().map(|(_, d)| d).collect())
        })
        .collect())
}

pub fn read_run(path: &Path) -> Result<RetrievalRun> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run(&text, path)
}
