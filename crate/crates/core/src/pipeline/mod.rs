//! Per-query orchestration: generate, cluster, score, aggregate, retrieve.

pub mod ablation;
pub mod artifacts;
pub mod dataset;
pub mod finetune;
pub mod run;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::aggregation::{
    aggregate_dc, aggregate_fw, aggregate_scoredw, aggregate_simdw, AggregatedQuery, Embedded,
    Fused, WeightedQueryBundle,
};
use crate::cache::ContentCache;
use crate::config::{
    AggregationStrategy, EmbeddingProviderKind, LlmProviderKind, LlmSettings, PipelineConfig,
};
use crate::embedding::{EmbeddingProvider, EmbeddingService, HttpEmbedder, MockEmbedder};
use crate::error::{Error, Result};
use crate::llm::{
    parse_cluster_output, parse_score_output, render_prompt, ChatCompletionsProvider,
    GenerationProvider, GenerationRequest, LlmGateway, ReplayProvider, RequestContext, ScoreList,
    TemplatedMockProvider,
};
use crate::qerm::{featurize, LoopIteration, QermPipeline};
use crate::retrieval::{DocIndex, ScoredDoc};
use crate::types::{ClusterSet, PromptKind, Query, ReformulatedQuery};

pub use ablation::{ablate, AblationKind, AblationRow, AblationTable};
pub use dataset::Dataset;
pub use finetune::{export_finetune_pairs, FinetuneExport, FinetunePair};
pub use run::{run_pipeline, RunManifest, RunOptions, RunOutput};

pub fn build_generation_provider(
    settings: &LlmSettings,
    seed: u64,
) -> Result<Arc<dyn GenerationProvider>> {
    Ok(match settings.provider {
        LlmProviderKind::Mock => Arc::new(TemplatedMockProvider::new(seed)),
        LlmProviderKind::Fixture => {
            let path = settings
                .fixture_path
                .as_deref()
                .ok_or_else(|| Error::Config("fixture provider needs fixture_path".into()))?;
            Arc::new(ReplayProvider::load(path)?)
        }
        LlmProviderKind::Http => {
            let endpoint = settings
                .endpoint
                .clone()
                .ok_or_else(|| Error::Config("http provider needs an endpoint".into()))?;
            let model = settings
                .model
                .clone()
                .ok_or_else(|| Error::Config("http provider needs a model".into()))?;
            Arc::new(ChatCompletionsProvider::new(
                endpoint,
                model,
                settings.api_key.clone(),
            )?)
        }
    })
}

pub fn build_embedding_provider(config: &PipelineConfig) -> Result<Arc<dyn EmbeddingProvider>> {
    let s = &config.embedding;
    Ok(match s.provider {
        EmbeddingProviderKind::Mock => Arc::new(MockEmbedder::new(s.dim, s.seed)),
        EmbeddingProviderKind::Http => {
            let endpoint = s
                .endpoint
                .clone()
                .ok_or_else(|| Error::Config("embedding.endpoint is required for http".into()))?;
            let model = s
                .model
                .clone()
                .ok_or_else(|| Error::Config("embedding.model is required for http".into()))?;
            Arc::new(HttpEmbedder::new(
                endpoint,
                model,
                s.api_key.clone(),
                s.transport_retries,
            )?)
        }
    })
}

pub fn build_gateway(
    settings: &LlmSettings,
    seed: u64,
    cache: Arc<ContentCache>,
) -> Result<LlmGateway> {
    let provider = build_generation_provider(settings, seed)?;
    let backoff = match settings.provider {
        LlmProviderKind::Http => Duration::from_millis(500),
        _ => Duration::ZERO,
    };
    Ok(LlmGateway::new(provider, cache).with_retries(settings.transport_retries, backoff))
}

/// Everything one query produced in one pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTrace {
    pub qid: String,
    pub iteration: usize,
    pub generated: Vec<ReformulatedQuery>,
    pub clusters: ClusterSet,
    pub scores: Option<ScoreList>,
    pub strategy: AggregationStrategy,
    pub bundle: WeightedQueryBundle,
    /// The concatenated query for the DC strategy.
    pub fused_text: Option<String>,
    /// The vector handed to retrieval.
    pub vector: Vec<f64>,
    pub results: Vec<ScoredDoc>,
}

pub struct Pipeline {
    config: PipelineConfig,
    llm: Arc<LlmGateway>,
    embedder: Arc<EmbeddingService>,
    index: Arc<DocIndex>,
}

impl Pipeline {
    pub fn new(
        config: PipelineConfig,
        llm: Arc<LlmGateway>,
        embedder: Arc<EmbeddingService>,
        index: Arc<DocIndex>,
    ) -> Result<Self> {
        let config = crate::config::validate_config(config)?;
        embedder.expect_dim(index.dim())?;
        Ok(Self {
            config,
            llm,
            embedder,
            index,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn llm(&self) -> &LlmGateway {
        &self.llm
    }

    pub fn embedder(&self) -> &EmbeddingService {
        &self.embedder
    }

    pub fn index(&self) -> &DocIndex {
        &self.index
    }

    fn request(
        &self,
        kind: PromptKind,
        query: &Query,
        inputs: &[String],
        iteration: usize,
        attempt: usize,
        n: usize,
    ) -> Result<GenerationRequest> {
        let extra = (!kind.is_generation()).then_some(inputs);
        Ok(GenerationRequest {
            prompt: render_prompt(kind, query, extra)?,
            sampling: self.config.sampling,
            n_samples: n,
            context: RequestContext {
                kind,
                query: query.text.clone(),
                inputs: inputs.to_vec(),
                iteration,
                attempt,
            },
        })
    }

    /// N completions for every configured generation prompt.
    pub fn generate(&self, query: &Query, iteration: usize) -> Result<Vec<ReformulatedQuery>> {
        let n = self.config.n_per_prompt;
        let mut out = Vec::with_capacity(n * self.config.prompt_kinds.len());
        for &kind in &self.config.prompt_kinds {
            let req = self.request(kind, query, &[], iteration, 0, n)?;
            let resp = self.llm.generate(&req)?;
            for (i, text) in resp.completions.into_iter().enumerate() {
                out.push(ReformulatedQuery::new(
                    text.trim(),
                    kind,
                    i,
                    iteration,
                    n,
                    iteration.max(self.config.max_iterations),
                )?);
            }
        }
        Ok(out)
    }

    /// Sends `kind` and parses the reply, re-asking with a new attempt
    /// number when the reply does not parse.
    pub(crate) fn ask_parsed<T>(
        &self,
        gateway: &LlmGateway,
        kind: PromptKind,
        query: &Query,
        inputs: &[String],
        iteration: usize,
        parse: impl Fn(&str) -> std::result::Result<T, crate::llm::ParseError>,
    ) -> Result<T> {
        let mut attempt = 0;
        loop {
            let req = self.request(kind, query, inputs, iteration, attempt, 1)?;
            let resp = gateway.generate(&req)?;
            match parse(&resp.completions[0]) {
                Ok(v) => return Ok(v),
                Err(e) if attempt < self.config.llm.parse_retries => {
                    log::warn!(
                        "query `{}`: {kind} reply did not parse ({e}), asking again",
                        query.id
                    );
                    attempt += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn cluster(
        &self,
        query: &Query,
        generated: &[ReformulatedQuery],
        iteration: usize,
    ) -> Result<ClusterSet> {
        let texts: Vec<String> = generated.iter().map(|g| g.text.clone()).collect();
        self.ask_parsed(
            &self.llm,
            PromptKind::ClusteringGeneration,
            query,
            &texts,
            iteration,
            |raw| parse_cluster_output(raw, iteration),
        )
    }

    pub fn score(
        &self,
        query: &Query,
        clusters: &ClusterSet,
        iteration: usize,
    ) -> Result<ScoreList> {
        let expected = clusters.len();
        self.ask_parsed(
            &self.llm,
            PromptKind::Scoring,
            query,
            clusters.clusters(),
            iteration,
            |raw| parse_score_output(raw, expected),
        )
    }

    pub fn aggregate(
        &self,
        query: &Query,
        clusters: &ClusterSet,
        scores: Option<&ScoreList>,
    ) -> Result<AggregatedQuery> {
        let cfg = &self.config;
        if cfg.aggregation_strategy == AggregationStrategy::Dc {
            return Ok(aggregate_dc(&query.text, clusters.clusters()));
        }
        let init = Embedded::new(query.text.clone(), self.embedder.embed_one(&query.text)?);
        let refs: Vec<Embedded> = clusters
            .clusters()
            .iter()
            .cloned()
            .zip(self.embedder.embed(clusters.clusters())?)
            .map(|(t, e)| Embedded::new(t, e))
            .collect();
        match cfg.aggregation_strategy {
            AggregationStrategy::Fw => aggregate_fw(&init, &refs, cfg.w0),
            AggregationStrategy::SimDw => aggregate_simdw(&init, &refs, cfg.w0, cfg.sim_threshold),
            AggregationStrategy::ScoreDw => {
                let scores =
                    scores.ok_or_else(|| Error::Invalid("ScoreDW needs cluster scores".into()))?;
                aggregate_scoredw(&init, &refs, scores, cfg.w0, cfg.score_threshold)
            }
            AggregationStrategy::Dc => unreachable!("handled above"),
        }
    }

    /// Retrieval vector for an aggregated query; DC text is embedded whole.
    pub fn query_vector(&self, aggregated: &AggregatedQuery) -> Result<Vec<f64>> {
        match &aggregated.fused {
            Fused::Embedding(e) => Ok(e.values().to_vec()),
            Fused::Text(t) => Ok(self.embedder.embed_one(t)?.into_values()),
        }
    }

    pub fn retrieve(&self, vector: &[f64]) -> Result<Vec<ScoredDoc>> {
        self.index
            .retrieve(vector, self.config.top_k, self.config.score_fn)
    }

    pub fn needs_scores(&self) -> bool {
        self.config.aggregation_strategy == AggregationStrategy::ScoreDw
    }

    pub fn process(&self, query: &Query, iteration: usize) -> Result<QueryTrace> {
        let generated = self.generate(query, iteration)?;
        let clusters = self.cluster(query, &generated, iteration)?;
        let scores = if self.needs_scores() {
            Some(self.score(query, &clusters, iteration)?)
        } else {
            None
        };
        let aggregated = self.aggregate(query, &clusters, scores.as_ref())?;
        let vector = self.query_vector(&aggregated)?;
        let results = self.retrieve(&vector)?;
        Ok(QueryTrace {
            qid: query.id.clone(),
            iteration,
            generated,
            clusters,
            scores,
            strategy: aggregated.strategy,
            fused_text: aggregated.text().map(str::to_string),
            bundle: aggregated.bundle,
            vector,
            results,
        })
    }
}

impl QermPipeline for Pipeline {
    type Detail = QueryTrace;

    fn iterate(&self, query: &Query, iteration: usize) -> Result<LoopIteration<QueryTrace>> {
        let trace = self.process(query, iteration)?;
        let init = self.embedder.embed_one(&query.text)?;
        let clusters = self.embedder.embed(trace.clusters.clusters())?;
        let features = featurize(&init, &clusters)?;
        Ok(LoopIteration {
            clusters: trace.clusters.clone(),
            features,
            results: trace.results.clone(),
            detail: trace,
        })
    }
}
