//! Embeddings over HTTP: POST `{model, input: [...]}`, read `data[].embedding`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::EmbeddingProvider;
use crate::error::{Error, Result};

#[derive(Serialize)]
struct EmbeddingsBody<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

pub struct HttpEmbedder {
    id: String,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    retries: usize,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        retries: usize,
    ) -> Result<Self> {
        let model = model.into();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Invalid(format!("http client: {e}")))?;
        Ok(Self {
            id: format!("embed:{model}"),
            endpoint: endpoint.into(),
            model,
            api_key,
            retries,
            client,
        })
    }

    fn post_once(&self, texts: &[String]) -> std::result::Result<String, (bool, String)> {
        let mut builder = self.client.post(&self.endpoint).json(&EmbeddingsBody {
            model: &self.model,
            input: texts,
        });
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| (true, e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| (true, e.to_string()))?;
        if status.is_success() {
            Ok(text)
        } else {
            let retry = status.as_u16() == 429 || status.is_server_error();
            Err((retry, format!("HTTP {status}: {text}")))
        }
    }
}

pub(crate) fn decode_embeddings(provider: &str, payload: &str) -> Result<Vec<Vec<f64>>> {
    let mut parsed: EmbeddingsResponse =
        serde_json::from_str(payload).map_err(|e| Error::Contract {
            provider: provider.to_string(),
            message: format!("malformed payload: {e}"),
        })?;
    parsed.data.sort_by_key(|d| d.index.unwrap_or(0));
    Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
}

impl EmbeddingProvider for HttpEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.post_once(texts) {
                Ok(payload) => return decode_embeddings(&self.id, &payload),
                Err((true, msg)) if attempts <= self.retries => {
                    log::warn!("{}: transient failure ({msg}), retrying", self.id);
                    std::thread::sleep(Duration::from_millis(500) * attempts as u32);
                }
                Err((_, message)) => {
                    return Err(Error::Transport {
                        provider: self.id.clone(),
                        attempts,
                        message,
                    })
                }
            }
        }
    }
}
