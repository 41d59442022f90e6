use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Pipeline, QueryTrace};
use crate::cache::write_atomic;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_run, MetricReport, Qrels};
use crate::qerm::{
    compute_epsilon, feature_dim, feedback_loop, LoopState, QermModel, QermPipeline,
    QualityClassifier,
};
use crate::retrieval::RetrievalRun;
use crate::types::{PromptKind, Query};

#[derive(Debug, Clone, Default)]
pub struct RunOptions<'a> {
    pub run_tag: String,
    /// Wrap each query in the reward-gated regeneration loop.
    pub qerm: bool,
    pub model: Option<&'a QermModel>,
}

#[derive(Debug)]
pub struct RunOutput {
    /// The trace whose results went into the run, per successful query.
    pub traces: Vec<QueryTrace>,
    pub loops: Vec<LoopState>,
    pub epsilon: Option<f64>,
    /// Query id -> error message.
    pub failures: BTreeMap<String, String>,
    pub run: RetrievalRun,
    pub report: MetricReport,
    pub elapsed: Duration,
}

pub(crate) fn thread_pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::Invalid(format!("worker pool: {e}")))
}

pub fn run_pipeline(
    pipeline: &Pipeline,
    queries: &[Query],
    qrels: &Qrels,
    options: &RunOptions,
) -> Result<RunOutput> {
    let model = match (options.qerm, options.model) {
        (true, None) => return Err(Error::Qerm("--qerm needs a trained model".into())),
        (true, Some(m)) => {
            let expected = feature_dim(pipeline.index().dim());
            if m.feature_dim != expected {
                return Err(Error::Dimension {
                    expected,
                    found: m.feature_dim,
                });
            }
            Some(m)
        }
        (false, _) => None,
    };
    if queries.is_empty() {
        return Err(Error::Invalid("no queries to run".into()));
    }
    let start = Instant::now();
    let pool = thread_pool(pipeline.config().parallelism)?;
    let mut failures = BTreeMap::new();
    let mut traces = Vec::with_capacity(queries.len());
    let mut loops = Vec::new();
    let mut epsilon = None;

    match model {
        None => {
            let results: Vec<Result<QueryTrace>> =
                pool.install(|| queries.par_iter().map(|q| pipeline.process(q, 0)).collect());
            for (q, r) in queries.iter().zip(results) {
                match r {
                    Ok(t) => traces.push(t),
                    Err(e) => {
                        log::error!("query `{}` failed: {e}", q.id);
                        failures.insert(q.id.clone(), e.to_string());
                    }
                }
            }
        }
        Some(model) => {
            let first: Vec<Result<f64>> = pool.install(|| {
                queries
                    .par_iter()
                    .map(|q| {
                        pipeline
                            .iterate(q, 0)
                            .and_then(|it| model.logit(&it.features))
                    })
                    .collect()
            });
            let mut ok = Vec::new();
            let mut logits = Vec::new();
            for (q, r) in queries.iter().zip(first) {
                match r {
                    Ok(l) => {
                        ok.push(q);
                        logits.push(l);
                    }
                    Err(e) => {
                        log::error!("query `{}` failed: {e}", q.id);
                        failures.insert(q.id.clone(), e.to_string());
                    }
                }
            }
            let eps = compute_epsilon(&logits)?;
            epsilon = Some(eps);
            let max = pipeline.config().max_iterations;
            let looped: Vec<_> = pool.install(|| {
                ok.par_iter()
                    .map(|q| feedback_loop(q, pipeline, model, eps, max))
                    .collect()
            });
            for (q, r) in ok.into_iter().zip(looped) {
                match r {
                    Ok(res) => {
                        loops.push(res.state);
                        traces.push(res.chosen.detail);
                    }
                    Err(failure) => {
                        log::error!("{failure}");
                        failures.insert(q.id.clone(), failure.error.to_string());
                        loops.push(*failure.state);
                    }
                }
            }
        }
    }

    let run: RetrievalRun = traces
        .iter()
        .map(|t| (t.qid.clone(), t.results.clone()))
        .collect();
    let report = evaluate_run(
        &run,
        qrels,
        pipeline.config().ndcg_k,
        pipeline.config().gain,
        &options.run_tag,
    );
    if !failures.is_empty() {
        log::warn!("{} of {} queries failed", failures.len(), queries.len());
    }
    Ok(RunOutput {
        traces,
        loops,
        epsilon,
        failures,
        run,
        report,
        elapsed: start.elapsed(),
    })
}

/// What went into a run and where its outputs went.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub seed: u64,
    pub llm_provider: String,
    /// How the N samples per prompt were requested.
    pub sample_mode: String,
    pub embedding_provider: String,
    pub dataset_dir: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub qerm_model: Option<PathBuf>,
    pub artifacts: BTreeMap<String, PathBuf>,
    pub timings_ms: BTreeMap<String, u64>,
    pub queries: usize,
    pub failures: usize,
    /// Provider calls per prompt kind, excluding cache hits.
    pub provider_calls: BTreeMap<PromptKind, usize>,
}

impl RunManifest {
    pub fn new(pipeline: &Pipeline) -> Self {
        Self {
            config: pipeline.config().clone(),
            seed: pipeline.config().seed,
            llm_provider: pipeline.llm().provider_id().to_string(),
            sample_mode: "one n-sample request per prompt".into(),
            embedding_provider: pipeline.embedder().provider_id().to_string(),
            dataset_dir: None,
            qrels: None,
            qerm_model: None,
            artifacts: BTreeMap::new(),
            timings_ms: BTreeMap::new(),
            queries: 0,
            failures: 0,
            provider_calls: pipeline.llm().calls().snapshot(),
        }
    }

    pub fn time(&mut self, stage: &str, elapsed: Duration) {
        self.timings_ms.insert(
            stage.to_string(),
            u64::try_from(elapsed.as_millis()).unwrap_or(u64::MAX),
        );
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}
