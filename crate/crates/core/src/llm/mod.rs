//! LLM access: prompt rendering, a provider abstraction, completion parsers
//! and a caching gateway with bounded retries.

pub mod fixture;
pub mod http;
pub mod mock;
pub mod parse;
pub mod prompt;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::cache::{content_hash, ContentCache};
use crate::config::Sampling;
use crate::error::{Error, Result};
use crate::types::PromptKind;

pub use fixture::ReplayProvider;
pub use http::ChatCompletionsProvider;
pub use mock::TemplatedMockProvider;
pub use parse::{parse_cluster_output, parse_score_output, ParseError, ScoreList};
pub use prompt::render_prompt;

/// What the request is for. Providers that talk to a real model ignore this;
/// the replay and mock providers key off it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestContext {
    pub kind: PromptKind,
    pub query: String,
    /// Generated queries (clustering) or cluster representatives (scoring).
    pub inputs: Vec<String>,
    /// Feedback-loop timestep.
    pub iteration: usize,
    /// Re-generation attempt after a parse failure.
    pub attempt: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub prompt: String,
    pub sampling: Sampling,
    pub n_samples: usize,
    pub context: RequestContext,
}

impl GenerationRequest {
    /// Content hash of everything that determines the completion: the
    /// rendered prompt, sampling parameters, sample count and provider,
    /// salted with the loop iteration and retry attempt so that
    /// regenerations get fresh completions yet stay replayable.
    pub fn cache_key(&self, provider_id: &str) -> String {
        content_hash(&[
            b"generation-v1",
            provider_id.as_bytes(),
            self.prompt.as_bytes(),
            &self.sampling.temperature.to_le_bytes(),
            &self.sampling.top_p.to_le_bytes(),
            &(self.n_samples as u64).to_le_bytes(),
            &(self.context.iteration as u64).to_le_bytes(),
            &(self.context.attempt as u64).to_le_bytes(),
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub completions: Vec<String>,
    pub provider: String,
    pub cache_hit: bool,
    pub cache_key: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProviderError {
    /// Worth retrying: timeouts, connection resets, 429 and 5xx.
    Transient(String),
    Fatal(String),
}

/// A source of completions. `complete` returns the raw provider payload,
/// which is what gets cached; `decode` turns a payload into completions.
pub trait GenerationProvider: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, request: &GenerationRequest) -> std::result::Result<String, ProviderError>;

    fn decode(&self, payload: &str) -> Result<Vec<String>>;
}

/// Provider calls per prompt kind, excluding cache hits.
#[derive(Debug, Default)]
pub struct CallLog {
    counts: Mutex<BTreeMap<PromptKind, usize>>,
}

impl CallLog {
    fn record(&self, kind: PromptKind) {
        *self
            .counts
            .lock()
            .expect("call log")
            .entry(kind)
            .or_default() += 1;
    }

    pub fn count(&self, kind: PromptKind) -> usize {
        self.counts
            .lock()
            .expect("call log")
            .get(&kind)
            .copied()
            .unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.lock().expect("call log").values().sum()
    }

    pub fn snapshot(&self) -> BTreeMap<PromptKind, usize> {
        self.counts.lock().expect("call log").clone()
    }
}

pub struct LlmGateway {
    provider: Arc<dyn GenerationProvider>,
    cache: Arc<ContentCache>,
    transport_retries: usize,
    backoff: Duration,
    calls: CallLog,
}

impl LlmGateway {
    pub fn new(provider: Arc<dyn GenerationProvider>, cache: Arc<ContentCache>) -> Self {
        Self {
            provider,
            cache,
            transport_retries: 3,
            backoff: Duration::from_millis(500),
            calls: CallLog::default(),
        }
    }

    pub fn with_retries(mut self, transport_retries: usize, backoff: Duration) -> Self {
        self.transport_retries = transport_retries;
        self.backoff = backoff;
        self
    }

    pub fn provider_id(&self) -> &str {
        self.provider.id()
    }

    pub fn calls(&self) -> &CallLog {
        &self.calls
    }

    fn decode_checked(&self, payload: &str, expected: usize) -> Result<Vec<String>> {
        let completions = self.provider.decode(payload)?;
        if completions.len() != expected {
            return Err(Error::Contract {
                provider: self.provider.id().to_string(),
                message: format!(
                    "requested {expected} completion(s), received {}",
                    completions.len()
                ),
            });
        }
        Ok(completions)
    }

    pub fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse> {
        if request.n_samples == 0 {
            return Err(Error::Invalid("n_samples must be at least 1".into()));
        }
        let key = request.cache_key(self.provider.id());
        if let Some(payload) = self.cache.get(&key) {
            if let Ok(completions) = self.decode_checked(&payload, request.n_samples) {
                return Ok(GenerationResponse {
                    completions,
                    provider: self.provider.id().to_string(),
                    cache_hit: true,
                    cache_key: key,
                });
            }
            log::warn!("discarding undecodable cache entry {key}");
        }

        let mut attempts = 0;
        let payload = loop {
            attempts += 1;
            self.calls.record(request.context.kind);
            match self.provider.complete(request) {
                Ok(payload) => break payload,
                Err(ProviderError::Transient(msg)) if attempts <= self.transport_retries => {
                    log::warn!(
                        "{}: transient failure ({msg}), retrying",
                        self.provider.id()
                    );
                    std::thread::sleep(self.backoff * attempts as u32);
                }
                Err(ProviderError::Transient(message)) | Err(ProviderError::Fatal(message)) => {
                    return Err(Error::Transport {
                        provider: self.provider.id().to_string(),
                        attempts,
                        message,
                    })
                }
            }
        };
        let completions = self.decode_checked(&payload, request.n_samples)?;
        self.cache.put(&key, &payload)?;
        Ok(GenerationResponse {
            completions,
            provider: self.provider.id().to_string(),
            cache_hit: false,
            cache_key: key,
        })
    }
}

/// Payload layout used by the offline providers.
#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct OfflinePayload {
    pub completions: Vec<String>,
}

pub(crate) fn decode_offline(provider: &str, payload: &str) -> Result<Vec<String>> {
    serde_json::from_str::<OfflinePayload>(payload)
        .map(|p| p.completions)
        .map_err(|e| Error::Contract {
            provider: provider.to_string(),
            message: format!("malformed payload: {e}"),
        })
}
