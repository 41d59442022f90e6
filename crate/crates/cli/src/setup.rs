use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context as _, Result};
use clusterq::cache::ContentCache;
use clusterq::config::{validate_config, AggregationStrategy, LlmSettings, PipelineConfig};
use clusterq::embedding::EmbeddingService;
use clusterq::llm::LlmGateway;
use clusterq::pipeline::{build_embedding_provider, build_gateway, Dataset, Pipeline, RunManifest};

use crate::GlobalArgs;

/// Reads the config file (or defaults), resolves relative fixture paths
/// against the file's directory, then applies env and flag overrides.
pub fn load_config(args: &GlobalArgs) -> Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let mut cfg = PipelineConfig::load(path)?;
            let base = path.parent().unwrap_or(Path::new("."));
            resolve_fixture(&mut cfg.llm, base);
            if let Some(judge) = cfg.judge.as_mut() {
                resolve_fixture(judge, base);
            }
            cfg
        }
        None => PipelineConfig::default(),
    };
    cfg.apply_env(|k| std::env::var(k).ok());
    if let Some(s) = args.strategy {
        cfg.aggregation_strategy = s;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(p) = args.parallelism {
        cfg.parallelism = p;
    }
    Ok(validate_config(cfg)?)
}

fn resolve_fixture(settings: &mut LlmSettings, base: &Path) {
    if let Some(p) = settings.fixture_path.as_mut() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

pub fn parse_strategy(s: &str) -> std::result::Result<AggregationStrategy, String> {
    s.parse().map_err(|e: clusterq::error::Error| e.to_string())
}

/// Everything a subcommand that talks to providers needs.
pub struct Context {
    pub config: PipelineConfig,
    pub cache: Arc<ContentCache>,
    pub llm: Arc<LlmGateway>,
    pub embedder: Arc<EmbeddingService>,
    pub dataset: Dataset,
    pub pipeline: Pipeline,
    pub out_dir: PathBuf,
}

impl Context {
    pub fn new(args: &GlobalArgs) -> Result<Self> {
        let config = load_config(args)?;
        let Some(dataset_dir) = &args.dataset_dir else {
            bail!("--dataset-dir is required");
        };
        let cache = open_cache(args)?;
        let embedder = Arc::new(EmbeddingService::new(
            build_embedding_provider(&config)?,
            cache.clone(),
        ));
        let dataset = Dataset::load(dataset_dir, &embedder)
            .with_context(|| format!("loading dataset {}", dataset_dir.display()))?;
        let llm = Arc::new(build_gateway(&config.llm, config.seed, cache.clone())?);
        let pipeline = Pipeline::new(
            config.clone(),
            llm.clone(),
            embedder.clone(),
            dataset.index.clone(),
        )?;
        std::fs::create_dir_all(&args.out_dir)
            .with_context(|| format!("creating {}", args.out_dir.display()))?;
        Ok(Self {
            config,
            cache,
            llm,
            embedder,
            dataset,
            pipeline,
            out_dir: args.out_dir.clone(),
        })
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn manifest(&self) -> RunManifest {
        let mut m = RunManifest::new(&self.pipeline);
        m.dataset_dir = Some(self.dataset.dir.clone());
        m.qrels = Some(self.dataset.qrels_path.clone());
        m.queries = self.dataset.queries.len();
        m
    }

    /// Bounded pool for per-query fan-out.
    pub fn pool(&self) -> Result<rayon::ThreadPool> {
        Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.parallelism)
            .build()?)
    }
}

pub fn open_cache(args: &GlobalArgs) -> Result<Arc<ContentCache>> {
    Ok(Arc::new(match &args.cache_dir {
        Some(dir) => ContentCache::on_disk(dir)?,
        None => ContentCache::in_memory(),
    }))
}

/// The error and its causes, skipping causes already quoted by the message above them.
pub fn describe(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg.push_str(": ");
            msg.push_str(&c);
        }
    }
    msg
}
