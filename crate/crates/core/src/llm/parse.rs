//! Strict parsers for the clustering and scoring completions.
//!
//! Both parsers are total: any input yields either a value or a
//! [`ParseError`].

use serde_json::Value;
use thiserror::Error;

use crate::types::{ClusterSet, MAX_CLUSTERS};

pub const MIN_SCORE: f64 = 1.0;
pub const MAX_SCORE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("no JSON object found in completion")]
    NoJsonObject,
    #[error("expected 1 to {MAX_CLUSTERS} clusters, found {0}")]
    ClusterCount(usize),
    #[error("unexpected key `{0}` in cluster object")]
    UnexpectedKey(String),
    #[error("cluster `{0}` is not a string")]
    NonStringCluster(String),
    #[error("cluster `{0}` is empty")]
    EmptyCluster(String),
    #[error("no numeric list found in completion")]
    NoScoreList,
    #[error("expected {expected} scores, found {found}")]
    ScoreCount { expected: usize, found: usize },
    #[error("score {0} is outside [1, 100]")]
    ScoreRange(f64),
}

/// LLM-produced score list, one value per cluster.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScoreList(pub Vec<f64>);

impl ScoreList {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum ScanState {
    Normal,
    Double,
    Single,
}

/// True when the next non-whitespace character after `idx` can legally
/// follow a closing quote in an object: `:`, `,`, `}` or end of input.
fn closes_single_quote(bytes: &[u8], idx: usize) -> bool {
    bytes[idx + 1..]
        .iter()
        .find(|b| !b.is_ascii_whitespace())
        .is_none_or(|b| matches!(b, b':' | b',' | b'}'))
}

/// True when the previous non-whitespace character before `idx` can open a
/// string inside an object: `{`, `,` or `:`.
fn opens_single_quote(bytes: &[u8], start: usize, idx: usize) -> bool {
    bytes[start..idx]
        .iter()
        .rev()
        .find(|b| !b.is_ascii_whitespace())
        .is_some_and(|b| matches!(b, b'{' | b',' | b':'))
}

/// Returns the byte end (exclusive) of the balanced object starting at
/// `start`, which must index a `{`.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut state = ScanState::Normal;
    let mut i = start;
    while i < bytes.len() {
        let b = bytes[i];
        match state {
            ScanState::Normal => match b {
                b'"' => state = ScanState::Double,
                b'\'' if opens_single_quote(bytes, start, i) => state = ScanState::Single,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(i + 1);
                    }
                }
                _ => {}
            },
            ScanState::Double => match b {
                b'\\' => i += 1,
                b'"' => state = ScanState::Normal,
                _ => {}
            },
            ScanState::Single => match b {
                b'\\' => i += 1,
                b'\'' if closes_single_quote(bytes, i) => state = ScanState::Normal,
                _ => {}
            },
        }
        i += 1;
    }
    None
}

/// Rewrites single-quoted strings of a pseudo-JSON object as JSON strings.
fn normalize_single_quotes(object: &str) -> String {
    let bytes = object.as_bytes();
    let mut out = String::with_capacity(object.len() + 8);
    let mut state = ScanState::Normal;
    let mut chars = object.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match state {
            ScanState::Normal => {
                if c == '"' {
                    state = ScanState::Double;
                    out.push(c);
                } else if c == '\'' && opens_single_quote(bytes, 0, i) {
                    state = ScanState::Single;
                    out.push('"');
                } else {
                    out.push(c);
                }
            }
            ScanState::Double => {
                out.push(c);
                if c == '\\' {
                    if let Some((_, n)) = chars.next() {
                        out.push(n);
                    }
                } else if c == '"' {
                    state = ScanState::Normal;
                }
            }
            ScanState::Single => match c {
                '\\' => {
                    if let Some((_, n)) = chars.next() {
                        if n == '\'' {
                            out.push('\'');
                        } else {
                            out.push('\\');
                            out.push(n);
                        }
                    }
                }
                '\'' if closes_single_quote(bytes, i) => {
                    state = ScanState::Normal;
                    out.push('"');
                }
                '"' => out.push_str("\\\""),
                _ => out.push(c),
            },
        }
    }
    out
}

/// Finds the first balanced `{...}` region that parses as a JSON object,
/// accepting single-quoted pseudo-JSON.
pub fn extract_first_object(text: &str) -> Option<serde_json::Map<String, Value>> {
    for (start, _) in text.char_indices().filter(|&(_, c)| c == '{') {
        let Some(end) = balanced_end(text, start) else {
            continue;
        };
        let candidate = &text[start..end];
        let parsed = serde_json::from_str::<Value>(candidate)
            .or_else(|_| serde_json::from_str::<Value>(&normalize_single_quotes(candidate)));
        if let Ok(Value::Object(map)) = parsed {
            return Some(map);
        }
    }
    None
}

fn cluster_index(key: &str) -> Option<usize> {
    let digits = key.strip_prefix("cluster")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    digits.parse().ok()
}

/// Parses a clustering completion into a [`ClusterSet`], preserving key order.
pub fn parse_cluster_output(raw: &str, source_iteration: usize) -> Result<ClusterSet, ParseError> {
    let map = extract_first_object(raw).ok_or(ParseError::NoJsonObject)?;
    for key in map.keys() {
        if cluster_index(key).is_none() {
            return Err(ParseError::UnexpectedKey(key.clone()));
        }
    }
    if map.is_empty() || map.len() > MAX_CLUSTERS {
        return Err(ParseError::ClusterCount(map.len()));
    }
    let mut clusters = Vec::with_capacity(map.len());
    for (key, value) in &map {
        if cluster_index(key).is_some_and(|i| i > MAX_CLUSTERS) {
            return Err(ParseError::UnexpectedKey(key.clone()));
        }
        let Value::String(text) = value else {
            return Err(ParseError::NonStringCluster(key.clone()));
        };
        let text = text.trim();
        if text.is_empty() {
            return Err(ParseError::EmptyCluster(key.clone()));
        }
        clusters.push(text.to_string());
    }
    Ok(ClusterSet::new(clusters, source_iteration).expect("count and emptiness checked above"))
}

/// Parses a `[s1, s2, ...]` score completion and checks count and range.
pub fn parse_score_output(raw: &str, expected_count: usize) -> Result<ScoreList, ParseError> {
    let mut found = None;
    for (start, _) in raw.char_indices().filter(|&(_, c)| c == '[') {
        let Some(len) = raw[start..].find(']') else {
            break;
        };
        if let Ok(values) = serde_json::from_str::<Vec<f64>>(&raw[start..=start + len]) {
            found = Some(values);
            break;
        }
    }
    let values = found.ok_or(ParseError::NoScoreList)?;
    if values.len() != expected_count {
        return Err(ParseError::ScoreCount {
            expected: expected_count,
            found: values.len(),
        });
    }
    if let Some(&bad) = values
        .iter()
        .find(|v| !(MIN_SCORE..=MAX_SCORE).contains(*v))
    {
        return Err(ParseError::ScoreRange(bad));
    }
    Ok(ScoreList(values))
}
