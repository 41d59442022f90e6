//! Replay provider backed by a JSONL file of recorded completions.
//!
//! Each line is one entry:
//!
//! ```text
//! {"kind": "ContextualExpansion", "query": "what causes fever", "iteration": 0, "completions": ["...", "..."]}
//! ```
//!
//! `iteration`, `attempt` and `inputs` (the prompt's generated-query or
//! cluster list) are optional; an entry that omits them matches any value.
//! When several entries match, the most specific one wins, and among equally
//! specific entries the first in the file. A request for `n` samples takes
//! the first `n` recorded completions.

use std::path::Path;

use serde::Deserialize;

use super::{decode_offline, GenerationProvider, GenerationRequest, OfflinePayload, ProviderError};
use crate::cache::content_hash;
use crate::error::{Error, Result};
use crate::types::PromptKind;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureEntry {
    pub kind: PromptKind,
    pub query: String,
    #[serde(default)]
    pub iteration: Option<usize>,
    #[serde(default)]
    pub attempt: Option<usize>,
    #[serde(default)]
    pub inputs: Option<Vec<String>>,
    pub completions: Vec<String>,
}

pub struct ReplayProvider {
    id: String,
    entries: Vec<FixtureEntry>,
}

impl ReplayProvider {
    pub fn from_entries(name: &str, entries: Vec<FixtureEntry>) -> Self {
        Self {
            id: format!("replay:{name}"),
            entries,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, line)| {
                serde_json::from_str(line).map_err(|e| Error::format(path, i + 1, e.to_string()))
            })
            .collect::<Result<Vec<FixtureEntry>>>()?;
        // fixture content is part of the id so edited fixtures never hit stale cache entries
        let digest = content_hash(&[text.as_bytes()]);
        Ok(Self {
            id: format!("replay:{}", &digest[..16]),
            entries,
        })
    }

    fn lookup(&self, request: &GenerationRequest) -> Option<&FixtureEntry> {
        let ctx = &request.context;
        let query = ctx.query.trim();
        self.entries
            .iter()
            .filter(|e| e.kind == ctx.kind && e.query.trim() == query)
            .filter(|e| e.iteration.is_none_or(|i| i == ctx.iteration))
            .filter(|e| e.attempt.is_none_or(|a| a == ctx.attempt))
            .filter(|e| e.inputs.as_ref().is_none_or(|i| *i == ctx.inputs))
            .map(|e| {
                let specificity = e.iteration.is_some() as u8
                    + e.attempt.is_some() as u8
                    + e.inputs.is_some() as u8;
                (specificity, e)
            })
            .fold(
                None,
                |best: Option<(u8, &FixtureEntry)>, (specificity, e)| match best {
                    Some((b, _)) if b >= specificity => best,
                    _ => Some((specificity, e)),
                },
            )
            .map(|(_, e)| e)
    }
}

impl GenerationProvider for ReplayProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &GenerationRequest) -> std::result::Result<String, ProviderError> {
        let ctx = &request.context;
        let entry = self.lookup(request).ok_or_else(|| {
            ProviderError::Fatal(format!(
                "no fixture for kind={} query={:?} iteration={} attempt={}",
                ctx.kind, ctx.query, ctx.iteration, ctx.attempt
            ))
        })?;
        if entry.completions.len() < request.n_samples {
            return Err(ProviderError::Fatal(format!(
                "fixture for kind={} query={:?} has {} completion(s), {} requested",
                ctx.kind,
                ctx.query,
                entry.completions.len(),
                request.n_samples
            )));
        }
        let payload = OfflinePayload {
            completions: entry.completions[..request.n_samples].to_vec(),
        };
        Ok(serde_json::to_string(&payload).expect("payload serializes"))
    }

    fn decode(&self, payload: &str) -> Result<Vec<String>> {
        decode_offline(&self.id, payload)
    }
}
