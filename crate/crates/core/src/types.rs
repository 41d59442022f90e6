//! Text units flowing through the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A user query as it enters the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let text = text.into();
        if id.is_empty() {
            return Err(Error::Invalid("query id must be non-empty".into()));
        }
        if text.trim().is_empty() {
            return Err(Error::Invalid(format!("query `{id}` has empty text")));
        }
        Ok(Self { id, text })
    }
}

/// Every prompt the pipeline knows how to render.
///
/// The first four are generation prompts; the last two consume the output
/// of earlier stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PromptKind {
    ContextualExpansion,
    DetailSpecific,
    AspectSpecific,
    ClarityEnhancement,
    ClusteringGeneration,
    Scoring,
}

impl PromptKind {
    pub const GENERATION: [PromptKind; 4] = [
        PromptKind::ContextualExpansion,
        PromptKind::DetailSpecific,
        PromptKind::AspectSpecific,
        PromptKind::ClarityEnhancement,
    ];

    pub fn is_generation(self) -> bool {
        !matches!(self, PromptKind::ClusteringGeneration | PromptKind::Scoring)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::ContextualExpansion => "ContextualExpansion",
            PromptKind::DetailSpecific => "DetailSpecific",
            PromptKind::AspectSpecific => "AspectSpecific",
            PromptKind::ClarityEnhancement => "ClarityEnhancement",
            PromptKind::ClusteringGeneration => "ClusteringGeneration",
            PromptKind::Scoring => "Scoring",
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let normalized: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match normalized.as_str() {
            "contextualexpansion" | "ce" => PromptKind::ContextualExpansion,
            "detailspecific" | "ds" => PromptKind::DetailSpecific,
            "aspectspecific" | "as" => PromptKind::AspectSpecific,
            "clarityenhancement" | "clarity" => PromptKind::ClarityEnhancement,
            "clusteringgeneration" | "clustering" => PromptKind::ClusteringGeneration,
            "scoring" => PromptKind::Scoring,
            _ => return Err(Error::Invalid(format!("unknown prompt kind `{s}`"))),
        })
    }
}

/// One completion of a generation prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReformulatedQuery {
    pub text: String,
    pub prompt_kind: PromptKind,
    /// Which of the N samples for this prompt.
    pub generation_index: usize,
    /// Feedback-loop timestep that produced it.
    pub iteration: usize,
}

impl ReformulatedQuery {
    pub fn new(
        text: impl Into<String>,
        prompt_kind: PromptKind,
        generation_index: usize,
        iteration: usize,
        n_per_prompt: usize,
        max_iterations: usize,
    ) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::Invalid("reformulated query text is empty".into()));
        }
        if !prompt_kind.is_generation() {
            return Err(Error::Invalid(format!(
                "{prompt_kind} is not a generation prompt"
            )));
        }
        if generation_index >= n_per_prompt {
            return Err(Error::Invalid(format!(
                "generation index {generation_index} must be < {n_per_prompt}"
            )));
        }
        if iteration > max_iterations {
            return Err(Error::Invalid(format!(
                "iteration {iteration} exceeds the maximum {max_iterations}"
            )));
        }
        Ok(Self {
            text,
            prompt_kind,
            generation_index,
            iteration,
        })
    }
}

pub const MAX_CLUSTERS: usize = 3;

/// The 1 to 3 representative intent queries produced by the clustering step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawClusterSet")]
pub struct ClusterSet {
    clusters: Vec<String>,
    pub source_iteration: usize,
}

#[derive(Deserialize)]
struct RawClusterSet {
    clusters: Vec<String>,
    source_iteration: usize,
}

impl TryFrom<RawClusterSet> for ClusterSet {
    type Error = Error;

    fn try_from(raw: RawClusterSet) -> Result<Self> {
        ClusterSet::new(raw.clusters, raw.source_iteration)
    }
}

impl ClusterSet {
    pub fn new(clusters: Vec<String>, source_iteration: usize) -> Result<Self> {
        if clusters.is_empty() || clusters.len() > MAX_CLUSTERS {
            return Err(Error::Invalid(format!(
                "a cluster set holds 1 to {MAX_CLUSTERS} queries, got {}",
                clusters.len()
            )));
        }
        if let Some(i) = clusters.iter().position(|c| c.trim().is_empty()) {
            return Err(Error::Invalid(format!("cluster {} is empty", i + 1)));
        }
        Ok(Self {
            clusters,
            source_iteration,
        })
    }

    pub fn clusters(&self) -> &[String] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Renders the set in the `{"cluster1": ..., "cluster2": ...}` layout the
    /// clustering prompt asks for.
    pub fn to_json(&self) -> String {
        let map: serde_json::Map<String, serde_json::Value> = self
            .clusters
            .iter()
            .enumerate()
            .map(|(i, c)| {
                (
                    format!("cluster{}", i + 1),
                    serde_json::Value::String(c.clone()),
                )
            })
            .collect();
        serde_json::Value::Object(map).to_string()
    }
}
