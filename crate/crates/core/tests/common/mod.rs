#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clusterq::cache::ContentCache;
use clusterq::config::{AggregationStrategy, LlmProviderKind, PipelineConfig};
use clusterq::embedding::EmbeddingService;
use clusterq::llm::LlmGateway;
use clusterq::pipeline::{build_embedding_provider, build_gateway, Dataset, Pipeline};

pub fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy")
}

pub fn toy_config(fixture: &str, strategy: AggregationStrategy) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.llm.provider = LlmProviderKind::Fixture;
    cfg.llm.fixture_path = Some(toy_dir().join(fixture));
    cfg.aggregation_strategy = strategy;
    cfg
}

pub struct Toy {
    pub dataset: Dataset,
    pub llm: Arc<LlmGateway>,
    pub embedder: Arc<EmbeddingService>,
    pub pipeline: Pipeline,
}

pub fn toy_with_cache(cfg: PipelineConfig, cache: Arc<ContentCache>) -> Toy {
    let embedder = Arc::new(EmbeddingService::new(
        build_embedding_provider(&cfg).unwrap(),
        cache.clone(),
    ));
    let dataset = Dataset::load(&toy_dir(), &embedder).unwrap();
    let llm = Arc::new(build_gateway(&cfg.llm, cfg.seed, cache).unwrap());
    let pipeline =
        Pipeline::new(cfg, llm.clone(), embedder.clone(), dataset.index.clone()).unwrap();
    Toy {
        dataset,
        llm,
        embedder,
        pipeline,
    }
}

pub fn toy(cfg: PipelineConfig) -> Toy {
    toy_with_cache(cfg, Arc::new(ContentCache::in_memory()))
}
