//! Pipeline configuration: schema, defaults and range validation.
//!
//! The configuration file is TOML. Every key is optional; absent keys take
//! the defaults below and unknown keys are rejected. Environment variables
//! may override provider endpoints and API keys, never numeric settings.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::PromptKind;

pub const DEFAULT_W0: f64 = 0.7;
pub const DEFAULT_SIM_THRESHOLD: f64 = 0.2;
pub const DEFAULT_SCORE_THRESHOLD: f64 = 60.0;
pub const DEFAULT_N_PER_PROMPT: usize = 2;
pub const DEFAULT_MAX_ITERATIONS: usize = 2;
/// No published value exists for the nDCG labelling threshold; 0.3 sits
/// below typical baseline averages so label 1 is the common case.
pub const DEFAULT_NDCG_LABEL_THRESHOLD: f64 = 0.3;
pub const DEFAULT_TEMPERATURE: f64 = 0.8;
pub const DEFAULT_TOP_P: f64 = 0.95;
pub const DEFAULT_PARSE_RETRIES: usize = 2;

pub const ENV_LLM_ENDPOINT: &str = "CLUSTERQ_LLM_ENDPOINT";
pub const ENV_LLM_API_KEY: &str = "CLUSTERQ_LLM_API_KEY";
pub const ENV_EMBED_ENDPOINT: &str = "CLUSTERQ_EMBED_ENDPOINT";
pub const ENV_EMBED_API_KEY: &str = "CLUSTERQ_EMBED_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AggregationStrategy {
    /// Direct concatenation with `[SEP]`.
    #[serde(rename = "DC")]
    Dc,
    /// Fixed weights.
    #[serde(rename = "FW")]
    Fw,
    /// Similarity-derived dynamic weights.
    #[serde(rename = "SimDW")]
    SimDw,
    /// LLM-score-derived dynamic weights.
    #[serde(rename = "ScoreDW")]
    ScoreDw,
}

impl AggregationStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            AggregationStrategy::Dc => "DC",
            AggregationStrategy::Fw => "FW",
            AggregationStrategy::SimDw => "SimDW",
            AggregationStrategy::ScoreDw => "ScoreDW",
        }
    }
}

impl fmt::Display for AggregationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregationStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dc" => Ok(Self::Dc),
            "fw" => Ok(Self::Fw),
            "simdw" => Ok(Self::SimDw),
            "scoredw" => Ok(Self::ScoreDw),
            _ => Err(Error::Invalid(format!(
                "unknown aggregation strategy `{s}` (expected DC, FW, SimDW or ScoreDW)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreFn {
    Cosine,
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    Linear,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmProviderKind {
    /// Deterministic templated mock.
    Mock,
    /// Replays recorded completions from a JSONL fixture.
    Fixture,
    /// Chat-completions HTTP endpoint.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    pub provider: LlmProviderKind,
    pub fixture_path: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Transport-level retries for one request.
    pub transport_retries: usize,
    /// Re-generations allowed when a cluster or score completion fails to parse.
    pub parse_retries: usize,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            provider: LlmProviderKind::Mock,
            fixture_path: None,
            endpoint: None,
            model: None,
            transport_retries: 3,
            parse_retries: DEFAULT_PARSE_RETRIES,
            api_key: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingProviderKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSettings {
    pub provider: EmbeddingProviderKind,
    /// Output dimension of the mock embedder.
    pub dim: usize,
    /// Seed of the mock embedder, kept apart from the run seed so that
    /// precomputed document vectors stay valid across runs.
    pub seed: u64,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub transport_retries: usize,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        Self {
            provider: EmbeddingProviderKind::Mock,
            dim: 64,
            seed: 0,
            endpoint: None,
            model: None,
            transport_retries: 3,
            api_key: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QermSettings {
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for QermSettings {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Fixed weight of the initial query.
    pub w0: f64,
    pub sim_threshold: f64,
    /// Compared on the raw 1..=100 score scale.
    pub score_threshold: f64,
    pub n_per_prompt: usize,
    /// Upper bound on feedback-loop regenerations; 0 disables the loop.
    pub max_iterations: usize,
    pub ndcg_label_threshold: f64,
    pub prompt_kinds: Vec<PromptKind>,
    pub aggregation_strategy: AggregationStrategy,
    pub sampling: Sampling,
    /// Retrieval depth written to run files.
    pub top_k: usize,
    /// Cutoff used for nDCG.
    pub ndcg_k: usize,
    pub score_fn: ScoreFn,
    pub gain: Gain,
    pub parallelism: usize,
    pub seed: u64,
    pub llm: LlmSettings,
    /// Scores fine-tuning pairs; the generation provider when absent.
    pub judge: Option<LlmSettings>,
    pub embedding: EmbeddingSettings,
    pub qerm: QermSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            w0: DEFAULT_W0,
            sim_threshold: DEFAULT_SIM_THRESHOLD,
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            n_per_prompt: DEFAULT_N_PER_PROMPT,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            ndcg_label_threshold: DEFAULT_NDCG_LABEL_THRESHOLD,
            prompt_kinds: vec![
                PromptKind::ContextualExpansion,
                PromptKind::DetailSpecific,
                PromptKind::AspectSpecific,
            ],
            aggregation_strategy: AggregationStrategy::SimDw,
            sampling: Sampling::default(),
            top_k: 100,
            ndcg_k: 10,
            score_fn: ScoreFn::Cosine,
            gain: Gain::Linear,
            parallelism: 4,
            seed: 42,
            llm: LlmSettings::default(),
            judge: None,
            embedding: EmbeddingSettings::default(),
            qerm: QermSettings::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses a TOML document; absent keys get defaults, unknown keys fail.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        validate_config(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always TOML-representable")
    }

    /// Applies endpoint and API-key overrides from a variable lookup.
    pub fn apply_env<F>(&mut self, lookup: F)
    where
        F: Fn(&str) -> Option<String>,
    {
        if let Some(v) = lookup(ENV_LLM_ENDPOINT) {
            self.llm.endpoint = Some(v);
        }
        if let Some(v) = lookup(ENV_LLM_API_KEY) {
            self.llm.api_key = Some(v);
        }
        if let Some(v) = lookup(ENV_EMBED_ENDPOINT) {
            self.embedding.endpoint = Some(v);
        }
        if let Some(v) = lookup(ENV_EMBED_API_KEY) {
            self.embedding.api_key = Some(v);
        }
    }
}

fn check_range(
    field: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
    legal: &'static str,
) -> Result<()> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(Error::ConfigRange {
            field,
            value: value.to_string(),
            legal,
        })
    }
}

fn check_min(field: &'static str, value: usize, min: usize, legal: &'static str) -> Result<()> {
    if value >= min {
        Ok(())
    } else {
        Err(Error::ConfigRange {
            field,
            value: value.to_string(),
            legal,
        })
    }
}

/// Range-checks every field. Validating a validated config returns it unchanged.
pub fn validate_config(cfg: PipelineConfig) -> Result<PipelineConfig> {
    check_range("w0", cfg.w0, 0.0, 1.0, "[0, 1]")?;
    check_range("sim_threshold", cfg.sim_threshold, -1.0, 1.0, "[-1, 1]")?;
    check_range(
        "score_threshold",
        cfg.score_threshold,
        1.0,
        100.0,
        "[1, 100]",
    )?;
    check_min("n_per_prompt", cfg.n_per_prompt, 1, "[1, inf)")?;
    check_range(
        "ndcg_label_threshold",
        cfg.ndcg_label_threshold,
        0.0,
        1.0,
        "[0, 1]",
    )?;
    check_range(
        "sampling.temperature",
        cfg.sampling.temperature,
        0.0,
        f64::MAX,
        "[0, inf)",
    )?;
    if !(cfg.sampling.top_p > 0.0 && cfg.sampling.top_p <= 1.0) {
        return Err(Error::ConfigRange {
            field: "sampling.top_p",
            value: cfg.sampling.top_p.to_string(),
            legal: "(0, 1]",
        });
    }
    check_min("top_k", cfg.top_k, 1, "[1, inf)")?;
    check_min("ndcg_k", cfg.ndcg_k, 1, "[1, inf)")?;
    check_min("parallelism", cfg.parallelism, 1, "[1, inf)")?;
    check_min("embedding.dim", cfg.embedding.dim, 1, "[1, inf)")?;
    check_min("qerm.epochs", cfg.qerm.epochs, 1, "[1, inf)")?;
    if !(cfg.qerm.learning_rate > 0.0 && cfg.qerm.learning_rate.is_finite()) {
        return Err(Error::ConfigRange {
            field: "qerm.learning_rate",
            value: cfg.qerm.learning_rate.to_string(),
            legal: "(0, inf)",
        });
    }

    if cfg.prompt_kinds.is_empty() {
        return Err(Error::Config(
            "prompt_kinds must list at least one prompt".into(),
        ));
    }
    for (i, kind) in cfg.prompt_kinds.iter().enumerate() {
        if !kind.is_generation() {
            return Err(Error::Config(format!(
                "prompt_kinds[{i}] = {kind} is not a generation prompt"
            )));
        }
        if cfg.prompt_kinds[..i].contains(kind) {
            return Err(Error::Config(format!("prompt_kinds lists {kind} twice")));
        }
    }
    if cfg.llm.provider == LlmProviderKind::Fixture && cfg.llm.fixture_path.is_none() {
        return Err(Error::Config(
            "llm.provider = \"fixture\" needs llm.fixture_path".into(),
        ));
    }
    if let Some(judge) = &cfg.judge {
        if judge.provider == LlmProviderKind::Fixture && judge.fixture_path.is_none() {
            return Err(Error::Config(
                "judge.provider = \"fixture\" needs judge.fixture_path".into(),
            ));
        }
    }
    Ok(cfg)
}
