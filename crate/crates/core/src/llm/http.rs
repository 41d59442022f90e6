//! Chat-completions HTTP client.
//!
//! Sends `{model, messages, temperature, top_p, n}` as a JSON POST and reads
//! `choices[].message.content` back. The raw response body is the payload
//! that gets cached.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{GenerationProvider, GenerationRequest, ProviderError};
use crate::error::{Error, Result};

#[derive(Debug, Serialize)]
pub struct ChatMessage<'a> {
    pub role: &'a str,
    pub content: &'a str,
}

#[derive(Debug, Serialize)]
pub struct ChatRequestBody<'a> {
    pub model: &'a str,
    pub messages: Vec<ChatMessage<'a>>,
    pub temperature: f64,
    pub top_p: f64,
    pub n: usize,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    #[serde(default)]
    index: Option<usize>,
    message: ChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct ChatCompletionsProvider {
    id: String,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl ChatCompletionsProvider {
    /// `endpoint` is the full URL of the chat-completions route.
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
    ) -> Result<Self> {
        let endpoint = endpoint.into();
        let model = model.into();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Invalid(format!("http client: {e}")))?;
        Ok(Self {
            id: format!("chat:{model}"),
            endpoint,
            model,
            api_key,
            client,
        })
    }

    pub fn body<'a>(&'a self, request: &'a GenerationRequest) -> ChatRequestBody<'a> {
        ChatRequestBody {
            model: &self.model,
            messages: vec![ChatMessage {
                role: "user",
                content: &request.prompt,
            }],
            temperature: request.sampling.temperature,
            top_p: request.sampling.top_p,
            n: request.n_samples,
        }
    }
}

impl GenerationProvider for ChatCompletionsProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &GenerationRequest) -> std::result::Result<String, ProviderError> {
        let mut builder = self.client.post(&self.endpoint).json(&self.body(request));
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        if status.is_success() {
            Ok(text)
        } else if status.as_u16() == 429 || status.is_server_error() {
            Err(ProviderError::Transient(format!("HTTP {status}")))
        } else {
            Err(ProviderError::Fatal(format!("HTTP {status}: {text}")))
        }
    }

    fn decode(&self, payload: &str) -> Result<Vec<String>> {
        let malformed = |message: String| Error::Contract {
            provider: self.id.clone(),
            message,
        };
        let mut parsed: ChatResponse = serde_json::from_str(payload)
            .map_err(|e| malformed(format!("malformed payload: {e}")))?;
        parsed.choices.sort_by_key(|c| c.index.unwrap_or(0));
        parsed
            .choices
            .into_iter()
            .map(|c| {
                c.message
                    .content
                    .ok_or_else(|| malformed("choice without message content".into()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Sampling;
    use crate::llm::RequestContext;
    use crate::types::PromptKind;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn request() -> GenerationRequest {
        GenerationRequest {
            prompt: "hello".into(),
            sampling: Sampling::default(),
            n_samples: 2,
            context: RequestContext {
                kind: PromptKind::ContextualExpansion,
                query: "q".into(),
                inputs: vec![],
                iteration: 0,
                attempt: 0,
            },
        }
    }

    /// Serves one canned response and hands back the request body it saw.
    fn serve_once(
        status: &'static str,
        body: &'static str,
    ) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut content_length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; content_length];
            reader.read_exact(&mut buf).unwrap();
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            String::from_utf8(buf).unwrap()
        });
        (format!("http://{addr}/v1/chat/completions"), handle)
    }

    #[test]
    fn posts_chat_completions_body() {
        let (url, server) = serve_once(
            "200 OK",
            r#"{"choices":[{"index":1,"message":{"role":"assistant","content":"b"}},{"index":0,"message":{"role":"assistant","content":"a"}}]}"#,
        );
        let provider = ChatCompletionsProvider::new(url, "tiny", Some("k".into())).unwrap();
        let payload = provider.complete(&request()).unwrap();
        let sent: serde_json::Value = serde_json::from_str(&server.join().unwrap()).unwrap();
        assert_eq!(sent["model"], "tiny");
        assert_eq!(sent["messages"][0]["role"], "user");
        assert_eq!(sent["messages"][0]["content"], "hello");
        assert_eq!(sent["temperature"], 0.8);
        assert_eq!(sent["top_p"], 0.95);
        assert_eq!(sent["n"], 2);
        assert_eq!(provider.decode(&payload).unwrap(), ["a", "b"]);
    }

    #[test]
    fn server_errors_are_transient() {
        let (url, server) = serve_once("503 Service Unavailable", "{}");
        let provider = ChatCompletionsProvider::new(url, "tiny", None).unwrap();
        assert!(matches!(
            provider.complete(&request()),
            Err(ProviderError::Transient(_))
        ));
        server.join().unwrap();
    }

    #[test]
    fn client_errors_are_fatal() {
        let (url, server) = serve_once("400 Bad Request", "{\"error\":\"bad\"}");
        let provider = ChatCompletionsProvider::new(url, "tiny", None).unwrap();
        assert!(matches!(
            provider.complete(&request()),
            Err(ProviderError::Fatal(_))
        ));
        server.join().unwrap();
    }

    #[test]
    fn malformed_payload_is_a_contract_error() {
        let provider = ChatCompletionsProvider::new("http://unused", "tiny", None).unwrap();
        assert!(matches!(
            provider.decode("not json"),
            Err(Error::Contract { .. })
        ));
        assert!(matches!(
            provider.decode(r#"{"choices":[{"message":{}}]}"#),
            Err(Error::Contract { .. })
        ));
    }
}
