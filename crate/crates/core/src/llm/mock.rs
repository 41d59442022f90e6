//! Deterministic templated mock provider for offline runs.
//!
//! Completions are a pure function of the seed and the request context:
//! generation prompts append kind-specific vocabulary to the query, the
//! clustering prompt groups its inputs round-robin into 1 to 3 clusters, and
//! the scoring prompt emits one score per cluster.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{decode_offline, GenerationProvider, GenerationRequest, OfflinePayload, ProviderError};
use crate::cache::content_hash;
use crate::error::Result;
use crate::types::PromptKind;

pub struct TemplatedMockProvider {
    id: String,
    seed: u64,
}

impl TemplatedMockProvider {
    pub fn new(seed: u64) -> Self {
        Self {
            id: format!("mock:{seed}"),
            seed,
        }
    }

    fn rng_for(&self, request: &GenerationRequest) -> ChaCha8Rng {
        let ctx = &request.context;
        let digest = content_hash(&[
            &self.seed.to_le_bytes(),
            ctx.kind.as_str().as_bytes(),
            ctx.query.as_bytes(),
            ctx.inputs.join("\u{1f}").as_bytes(),
            &(ctx.iteration as u64).to_le_bytes(),
            &(ctx.attempt as u64).to_le_bytes(),
        ]);
        let mut seed = [0u8; 32];
        hex::decode_to_slice(&digest, &mut seed).expect("sha256 hex is 32 bytes");
        ChaCha8Rng::from_seed(seed)
    }
}

fn vocabulary(kind: PromptKind) -> &'static [&'static str] {
    match kind {
        PromptKind::ContextualExpansion => &[
            "background",
            "context",
            "overview",
            "causes",
            "effects",
            "history",
            "factors",
        ],
        PromptKind::DetailSpecific => &[
            "details",
            "mechanism",
            "specific",
            "examples",
            "process",
            "components",
            "stages",
        ],
        PromptKind::AspectSpecific => &[
            "aspect",
            "impact",
            "risks",
            "treatment",
            "economics",
            "perspective",
            "outcomes",
        ],
        PromptKind::ClarityEnhancement => &[
            "clearly",
            "defined",
            "precise",
            "explanation",
            "meaning",
            "definition",
        ],
        PromptKind::ClusteringGeneration | PromptKind::Scoring => &[],
    }
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn generate_texts(kind: PromptKind, query: &str, n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let vocab = vocabulary(kind);
    (0..n)
        .map(|_| {
            let a = vocab[rng.random_range(0..vocab.len())];
            let b = vocab[rng.random_range(0..vocab.len())];
            format!("{} {a} {b}", query.trim())
        })
        .collect()
}

fn cluster_text(query: &str, inputs: &[String], rng: &mut ChaCha8Rng) -> String {
    let k = rng.random_range(1..=3usize).min(inputs.len().max(1));
    let query_words: BTreeSet<String> = words(query).into_iter().collect();
    let mut clusters = serde_json::Map::new();
    for c in 0..k {
        let mut extra: Vec<String> = Vec::new();
        for input in inputs.iter().skip(c).step_by(k) {
            for w in words(input) {
                if !query_words.contains(&w) && !extra.contains(&w) && extra.len() < 4 {
                    extra.push(w);
                }
            }
        }
        let text = if extra.is_empty() {
            query.trim().to_string()
        } else {
            format!("{} {}", query.trim(), extra.join(" "))
        };
        clusters.insert(format!("cluster{}", c + 1), serde_json::Value::String(text));
    }
    format!(
        "Here are the clusters:\n{}",
        serde_json::Value::Object(clusters)
    )
}

fn score_text(count: usize, rng: &mut ChaCha8Rng) -> String {
    let scores: Vec<String> = (0..count.max(1))
        .map(|_| rng.random_range(35..=95u32).to_string())
        .collect();
    format!("[{}]", scores.join(", "))
}

impl GenerationProvider for TemplatedMockProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &GenerationRequest) -> std::result::Result<String, ProviderError> {
        let ctx = &request.context;
        let mut rng = self.rng_for(request);
        let completions = match ctx.kind {
            k if k.is_generation() => generate_texts(k, &ctx.query, request.n_samples, &mut rng),
            PromptKind::ClusteringGeneration => (0..request.n_samples)
                .map(|_| cluster_text(&ctx.query, &ctx.inputs, &mut rng))
                .collect(),
            _ => (0..request.n_samples)
                .map(|_| score_text(ctx.inputs.len(), &mut rng))
                .collect(),
        };
        Ok(serde_json::to_string(&OfflinePayload { completions }).expect("payload serializes"))
    }

    fn decode(&self, payload: &str) -> Result<Vec<String>> {
        decode_offline(&self.id, payload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Sampling;
    use crate::llm::{parse_cluster_output, parse_score_output, RequestContext};

    fn request(kind: PromptKind, inputs: Vec<String>, n: usize) -> GenerationRequest {
        GenerationRequest {
            prompt: String::new(),
            sampling: Sampling::default(),
            n_samples: n,
            context: RequestContext {
                kind,
                query: "what causes fever".into(),
                inputs,
                iteration: 0,
                attempt: 0,
            },
        }
    }

    fn run(p: &TemplatedMockProvider, r: &GenerationRequest) -> Vec<String> {
        p.decode(&p.complete(r).unwrap()).unwrap()
    }

    #[test]
    fn deterministic_per_seed() {
        let r = request(PromptKind::DetailSpecific, vec![], 2);
        assert_eq!(
            run(&TemplatedMockProvider::new(1), &r),
            run(&TemplatedMockProvider::new(1), &r)
        );
        let out = run(&TemplatedMockProvider::new(1), &r);
        assert_eq!(out.len(), 2);
        assert!(out[0].starts_with("what causes fever "));
    }

    #[test]
    fn cluster_and_score_outputs_parse() {
        let p = TemplatedMockProvider::new(7);
        let gen: Vec<String> = (0..6).map(|i| format!("fever topic{i}")).collect();
        let raw = run(&p, &request(PromptKind::ClusteringGeneration, gen, 1));
        let set = parse_cluster_output(&raw[0], 0).unwrap();
        let scores = run(
            &p,
            &request(PromptKind::Scoring, set.clusters().to_vec(), 1),
        );
        assert_eq!(
            parse_score_output(&scores[0], set.len()).unwrap().len(),
            set.len()
        );
    }
}
