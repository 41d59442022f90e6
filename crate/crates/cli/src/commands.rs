use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context as _, Result};
use rayon::prelude::*;
use serde::Serialize;

use clusterq::embedding::EmbeddingService;
use clusterq::evaluation::{
    cluster_stats as summarize_clusters, evaluate_run, paired_ttest_holm, Comparison, MetricReport,
    Qrels,
};
use clusterq::llm::ScoreList;
use clusterq::pipeline::ablation::{parse_grid, AblationEnv, AblationKind};
use clusterq::pipeline::artifacts::{
    read_jsonl, write_jsonl, AggregateRecord, ClusterRecord, GeneratedRecord, ScoreRecord,
};
use clusterq::pipeline::dataset::qrels_path;
use clusterq::pipeline::{
    build_embedding_provider, build_gateway, export_finetune_pairs, run_pipeline, QueryTrace,
    RunOptions,
};
use clusterq::qerm::{build_training_set, infer_logit, train, QermModel, TrainingSet};
use clusterq::retrieval::{read_run, write_run, RetrievalRun};
use clusterq::types::Query;

use crate::setup::{describe, load_config, open_cache, Context};
use crate::GlobalArgs;

const GENERATED: &str = "generated.jsonl";
const CLUSTERS: &str = "clusters.jsonl";
const SCORES: &str = "scores.jsonl";
const AGGREGATES: &str = "aggregates.jsonl";
const RUN: &str = "run.trec";
const TRAIN: &str = "qerm_train.jsonl";
const MODEL: &str = "qerm_model.json";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    clusterq::cache::write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn or_default(input: Option<PathBuf>, ctx_out: &Path, name: &str) -> PathBuf {
    input.unwrap_or_else(|| ctx_out.join(name))
}

/// Runs `f` per item on the context's pool, keeping input order. Failures
/// are logged and returned as (id, message) rather than aborting the stage.
fn fan_out<T, R, F>(
    ctx: &Context,
    items: &[T],
    id: impl Fn(&T) -> String + Sync,
    f: F,
) -> Result<(Vec<R>, BTreeMap<String, String>)>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    let results: Vec<Result<R>> = ctx.pool()?.install(|| items.par_iter().map(&f).collect());
    let mut ok = Vec::with_capacity(items.len());
    let mut failures = BTreeMap::new();
    for (item, r) in items.iter().zip(results) {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                let msg = describe(&e);
                log::warn!("query `{}`: {msg}", id(item));
                failures.insert(id(item), msg);
            }
        }
    }
    Ok((ok, failures))
}

fn report_stage(
    ctx: &Context,
    stage: &str,
    written: usize,
    path: &Path,
    failures: &BTreeMap<String, String>,
) -> Result<()> {
    println!("{stage}: {written} queries -> {}", path.display());
    if !failures.is_empty() {
        let fpath = ctx.out(&format!("{stage}_failures.json"));
        write_json(&fpath, failures)?;
        println!(
            "{stage}: {} queries failed, see {}",
            failures.len(),
            fpath.display()
        );
    }
    Ok(())
}

fn record_query(qid: &str, text: &str) -> Result<Query> {
    Ok(Query::new(qid, text)?)
}

pub fn generate(g: &GlobalArgs) -> Result<()> {
    let ctx = Context::new(g)?;
    let (records, failures) = fan_out(
        &ctx,
        &ctx.dataset.queries,
        |q| q.id.clone(),
        |q| {
            Ok(GeneratedRecord {
                qid: q.id.clone(),
                query: q.text.clone(),
                iteration: 0,
                reformulations: ctx.pipeline.generate(q, 0)?,
            })
        },
    )?;
    let path = ctx.out(GENERATED);
    write_jsonl(&path, &records)?;
    report_stage(&ctx, "generate", records.len(), &path, &failures)
}

pub fn cluster(g: &GlobalArgs, input: Option<PathBuf>) -> Result<()> {
    let ctx = Context::new(g)?;
    let input = or_default(input, &ctx.out_dir, GENERATED);
    let generated: Vec<GeneratedRecord> = read_jsonl(&input)?;
    let (records, failures) = fan_out(
        &ctx,
        &generated,
        |r| r.qid.clone(),
        |r| {
            let q = record_query(&r.qid, &r.query)?;
            Ok(ClusterRecord {
                qid: r.qid.clone(),
                query: r.query.clone(),
                iteration: r.iteration,
                clusters: ctx.pipeline.cluster(&q, &r.reformulations, r.iteration)?,
            })
        },
    )?;
    let path = ctx.out(CLUSTERS);
    write_jsonl(&path, &records)?;
    report_stage(&ctx, "cluster", records.len(), &path, &failures)
}

pub fn score(g: &GlobalArgs, input: Option<PathBuf>) -> Result<()> {
    let ctx = Context::new(g)?;
    let input = or_default(input, &ctx.out_dir, CLUSTERS);
    let clusters: Vec<ClusterRecord> = read_jsonl(&input)?;
    let (records, failures) = fan_out(
        &ctx,
        &clusters,
        |r| r.qid.clone(),
        |r| {
            let q = record_query(&r.qid, &r.query)?;
            Ok(ScoreRecord {
                qid: r.qid.clone(),
                iteration: r.iteration,
                scores: ctx.pipeline.score(&q, &r.clusters, r.iteration)?,
            })
        },
    )?;
    let path = ctx.out(SCORES);
    write_jsonl(&path, &records)?;
    report_stage(&ctx, "score", records.len(), &path, &failures)
}

fn explain_line(
    qid: &str,
    trace_bundle: &impl Serialize,
    strategy: &impl Serialize,
) -> Result<String> {
    Ok(serde_json::to_string(&serde_json::json!({
        "qid": qid,
        "strategy": strategy,
        "bundle": trace_bundle,
    }))?)
}

pub fn aggregate(g: &GlobalArgs, clusters: Option<PathBuf>, scores: Option<PathBuf>) -> Result<()> {
    let ctx = Context::new(g)?;
    let clusters: Vec<ClusterRecord> = read_jsonl(&or_default(clusters, &ctx.out_dir, CLUSTERS))?;
    let scores: HashMap<String, ScoreList> = if ctx.pipeline.needs_scores() {
        let path = or_default(scores, &ctx.out_dir, SCORES);
        read_jsonl::<ScoreRecord>(&path)
            .with_context(|| "ScoreDW needs the score stage's output")?
            .into_iter()
            .map(|r| (r.qid, r.scores))
            .collect()
    } else {
        HashMap::new()
    };
    let (records, failures) = fan_out(
        &ctx,
        &clusters,
        |r| r.qid.clone(),
        |r| {
            let q = record_query(&r.qid, &r.query)?;
            let s = scores.get(&r.qid);
            if ctx.pipeline.needs_scores() && s.is_none() {
                bail!("no scores recorded");
            }
            let agg = ctx.pipeline.aggregate(&q, &r.clusters, s)?;
            let vector = ctx.pipeline.query_vector(&agg)?;
            Ok(AggregateRecord {
                qid: r.qid.clone(),
                strategy: agg.strategy,
                fused_text: agg.text().map(str::to_string),
                bundle: agg.bundle,
                vector,
            })
        },
    )?;
    if g.explain {
        for r in &records {
            println!("{}", explain_line(&r.qid, &r.bundle, &r.strategy)?);
        }
    }
    let path = ctx.out(AGGREGATES);
    write_jsonl(&path, &records)?;
    report_stage(&ctx, "aggregate", records.len(), &path, &failures)
}

pub fn retrieve(g: &GlobalArgs, input: Option<PathBuf>, tag: &str) -> Result<()> {
    let ctx = Context::new(g)?;
    let aggregates: Vec<AggregateRecord> =
        read_jsonl(&or_default(input, &ctx.out_dir, AGGREGATES))?;
    let (results, failures) = fan_out(
        &ctx,
        &aggregates,
        |r| r.qid.clone(),
        |r| Ok((r.qid.clone(), ctx.pipeline.retrieve(&r.vector)?)),
    )?;
    let run: RetrievalRun = results.into_iter().collect();
    let path = ctx.out(RUN);
    write_run(&path, &run, tag)?;
    report_stage(&ctx, "retrieve", run.len(), &path, &failures)
}

#[derive(Serialize)]
struct Evaluation {
    reports: Vec<MetricReport>,
    /// Each later run against the first.
    comparisons: Vec<Comparison>,
}

pub fn evaluate(g: &GlobalArgs, runs: &[PathBuf], qrels: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(g)?;
    let qrels_file = match (qrels, &g.dataset_dir) {
        (Some(p), _) => p,
        (None, Some(dir)) => qrels_path(dir)?,
        (None, None) => bail!("pass --qrels or --dataset-dir"),
    };
    let qrels = Qrels::read(&qrels_file)?;
    std::fs::create_dir_all(&g.out_dir)?;
    let mut reports = Vec::new();
    for path in runs {
        let tag = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        let report = evaluate_run(&read_run(path)?, &qrels, cfg.ndcg_k, cfg.gain, &tag);
        println!(
            "{tag}: nDCG@{} = {:.4} over {} queries",
            report.k,
            report.mean,
            report.per_query.len()
        );
        if !report.excluded.is_empty() {
            println!("{tag}: {} unjudged queries excluded", report.excluded.len());
        }
        clusterq::cache::write_atomic(
            &g.out_dir.join(format!("metrics_{tag}.csv")),
            report.to_csv().as_bytes(),
        )?;
        reports.push(report);
    }
    let comparisons = if reports.len() > 1 {
        let systems: Vec<(String, BTreeMap<String, f64>)> = reports[1..]
            .iter()
            .map(|r| (r.run_tag.clone(), r.per_query.clone()))
            .collect();
        let cmp = paired_ttest_holm(&reports[0].per_query, &systems)?;
        for c in &cmp {
            match c.adjusted_p {
                Some(p) => println!(
                    "{} vs {}: Holm-adjusted p = {p:.4}",
                    c.system, reports[0].run_tag
                ),
                None => println!(
                    "{} vs {}: no variance in differences",
                    c.system, reports[0].run_tag
                ),
            }
        }
        cmp
    } else {
        Vec::new()
    };
    write_json(
        &g.out_dir.join("evaluation.json"),
        &Evaluation {
            reports,
            comparisons,
        },
    )
}

fn load_model(path: Option<&Path>) -> Result<Option<QermModel>> {
    Ok(path.map(QermModel::load).transpose()?)
}

fn write_trace_artifacts(
    ctx: &Context,
    traces: &[QueryTrace],
    artifacts: &mut BTreeMap<String, PathBuf>,
) -> Result<()> {
    let queries: HashMap<&str, &str> = ctx
        .dataset
        .queries
        .iter()
        .map(|q| (q.id.as_str(), q.text.as_str()))
        .collect();
    let generated: Vec<GeneratedRecord> = traces
        .iter()
        .map(|t| GeneratedRecord {
            qid: t.qid.clone(),
            query: queries[t.qid.as_str()].to_string(),
            iteration: t.iteration,
            reformulations: t.generated.clone(),
        })
        .collect();
    let clusters: Vec<ClusterRecord> = traces
        .iter()
        .map(|t| ClusterRecord {
            qid: t.qid.clone(),
            query: queries[t.qid.as_str()].to_string(),
            iteration: t.iteration,
            clusters: t.clusters.clone(),
        })
        .collect();
    let scores: Vec<ScoreRecord> = traces
        .iter()
        .filter_map(|t| {
            t.scores.clone().map(|scores| ScoreRecord {
                qid: t.qid.clone(),
                iteration: t.iteration,
                scores,
            })
        })
        .collect();
    let aggregates: Vec<AggregateRecord> = traces
        .iter()
        .map(|t| AggregateRecord {
            qid: t.qid.clone(),
            strategy: t.strategy,
            bundle: t.bundle.clone(),
            fused_text: t.fused_text.clone(),
            vector: t.vector.clone(),
        })
        .collect();
    for (stage, name) in [
        ("generate", GENERATED),
        ("cluster", CLUSTERS),
        ("aggregate", AGGREGATES),
    ] {
        let path = ctx.out(name);
        match name {
            GENERATED => write_jsonl(&path, &generated)?,
            CLUSTERS => write_jsonl(&path, &clusters)?,
            _ => write_jsonl(&path, &aggregates)?,
        }
        artifacts.insert(stage.into(), path);
    }
    if !scores.is_empty() {
        let path = ctx.out(SCORES);
        write_jsonl(&path, &scores)?;
        artifacts.insert("score".into(), path);
    }
    Ok(())
}

pub fn run(g: &GlobalArgs, qerm: Option<&Path>, tag: &str) -> Result<()> {
    let model = load_model(qerm)?;
    let ctx = Context::new(g)?;
    let options = RunOptions {
        run_tag: tag.to_string(),
        qerm: qerm.is_some(),
        model: model.as_ref(),
    };
    let out = run_pipeline(
        &ctx.pipeline,
        &ctx.dataset.queries,
        &ctx.dataset.qrels,
        &options,
    )?;

    let mut manifest = ctx.manifest();
    manifest.qerm_model = qerm.map(Path::to_path_buf);
    manifest.failures = out.failures.len();
    manifest.time("run", out.elapsed);

    let write_start = Instant::now();
    write_trace_artifacts(&ctx, &out.traces, &mut manifest.artifacts)?;
    let run_path = ctx.out(RUN);
    write_run(&run_path, &out.run, tag)?;
    manifest.artifacts.insert("run".into(), run_path);
    let metrics = ctx.out("metrics.json");
    write_json(&metrics, &out.report)?;
    manifest.artifacts.insert("metrics".into(), metrics);
    let csv = ctx.out("metrics.csv");
    clusterq::cache::write_atomic(&csv, out.report.to_csv().as_bytes())?;
    manifest.artifacts.insert("metrics_csv".into(), csv);
    if !out.loops.is_empty() {
        let path = ctx.out("loops.jsonl");
        write_jsonl(&path, &out.loops)?;
        manifest.artifacts.insert("loops".into(), path);
    }
    if !out.failures.is_empty() {
        let path = ctx.out("failures.json");
        write_json(&path, &out.failures)?;
        manifest.artifacts.insert("failures".into(), path);
    }
    manifest.time("write", write_start.elapsed());
    manifest.write(&ctx.out("manifest.json"))?;

    if g.explain {
        for t in &out.traces {
            println!("{}", explain_line(&t.qid, &t.bundle, &t.strategy)?);
        }
    }
    if let Some(eps) = out.epsilon {
        let regenerated = out.loops.iter().filter(|l| l.regenerations() > 0).count();
        println!(
            "{tag}: epsilon = {eps:.4}, {regenerated} of {} queries regenerated",
            out.loops.len()
        );
    }
    println!(
        "{tag}: nDCG@{} = {:.4} over {} queries ({} failed)",
        out.report.k,
        out.report.mean,
        out.report.per_query.len(),
        out.failures.len()
    );
    Ok(())
}

pub fn ablate(g: &GlobalArgs, kind: &str, grid: Option<&str>, qerm: Option<&Path>) -> Result<()> {
    let kind: AblationKind = kind.parse()?;
    let grid = match grid {
        Some(text) => parse_grid(text)?,
        None => kind.default_grid(),
    };
    let model = load_model(qerm)?;
    let ctx = Context::new(g)?;
    let env = AblationEnv {
        llm: ctx.llm.clone(),
        embedder: ctx.embedder.clone(),
        index: ctx.dataset.index.clone(),
        queries: &ctx.dataset.queries,
        qrels: &ctx.dataset.qrels,
        model: model.as_ref(),
    };
    let table = clusterq::pipeline::ablate(&ctx.config, kind, &grid, &env)?;
    let csv = table.to_csv();
    let path = ctx.out(&format!("ablation_{kind}.csv"));
    clusterq::cache::write_atomic(&path, csv.as_bytes())?;
    print!("{csv}");
    for (setting, reason) in &table.failures {
        println!("{kind}={setting} failed: {reason}");
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn qerm_build_dataset(g: &GlobalArgs) -> Result<()> {
    let ctx = Context::new(g)?;
    let cfg = &ctx.config;
    let set = ctx.pool()?.install(|| {
        build_training_set(
            &ctx.dataset.queries,
            &ctx.pipeline,
            &ctx.dataset.qrels,
            cfg.ndcg_k,
            cfg.gain,
            cfg.ndcg_label_threshold,
        )
    });
    let path = ctx.out(TRAIN);
    set.write_jsonl(&path)?;
    let positives = set.examples.iter().filter(|e| e.label == 1).count();
    println!(
        "qerm: {} examples ({positives} positive at tau = {}) -> {}",
        set.examples.len(),
        cfg.ndcg_label_threshold,
        path.display()
    );
    for (qid, reason) in &set.skipped {
        println!("qerm: skipped `{qid}`: {reason}");
    }
    Ok(())
}

pub fn qerm_train(
    g: &GlobalArgs,
    input: Option<PathBuf>,
    model_out: Option<PathBuf>,
) -> Result<()> {
    let cfg = load_config(g)?;
    let input = or_default(input, &g.out_dir, TRAIN);
    let examples = TrainingSet::read_jsonl(&input)?;
    let model = train(&examples, cfg.qerm.epochs, cfg.qerm.learning_rate, cfg.seed)?;
    let correct = examples
        .iter()
        .map(|e| infer_logit(&model, &e.features).map(|p| (p >= 0.5) == (e.label == 1)))
        .collect::<clusterq::error::Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&ok| ok)
        .count();
    let path = or_default(model_out, &g.out_dir, MODEL);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    model.save(&path)?;
    let fit = match (
        model.degenerate_prior(),
        model.metadata.as_ref().and_then(|m| m.loss_trace.last()),
    ) {
        (Some(prior), _) => format!("single label, constant output {prior:.4}"),
        (None, Some(loss)) => format!("final loss {loss:.4}"),
        (None, None) => "no training trace".into(),
    };
    println!(
        "qerm: trained on {} examples, {fit}, training accuracy {correct}/{} -> {}",
        examples.len(),
        examples.len(),
        path.display()
    );
    Ok(())
}

pub fn export_finetune(g: &GlobalArgs) -> Result<()> {
    let ctx = Context::new(g)?;
    let settings = ctx
        .config
        .judge
        .clone()
        .unwrap_or_else(|| ctx.config.llm.clone());
    let judge = build_gateway(&settings, ctx.config.seed, ctx.cache.clone())?;
    let export = export_finetune_pairs(&ctx.pipeline, &ctx.dataset.queries, &judge)?;
    let path = ctx.out("finetune.jsonl");
    write_jsonl(&path, &export.pairs)?;
    let skipped = ctx.out("finetune_skipped.jsonl");
    write_jsonl(&skipped, &export.skipped)?;
    println!(
        "export-finetune: {} rows -> {}, {} skipped -> {}",
        export.pairs.len(),
        path.display(),
        export.skipped.len(),
        skipped.display()
    );
    Ok(())
}

pub fn cluster_stats(g: &GlobalArgs, input: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(g)?;
    let embedder = EmbeddingService::new(build_embedding_provider(&cfg)?, open_cache(g)?);
    let input = or_default(input, &g.out_dir, CLUSTERS);
    let records: Vec<ClusterRecord> = read_jsonl(&input)?;
    let sets: Vec<_> = records.into_iter().map(|r| r.clusters).collect();
    let stats = summarize_clusters(&sets, &embedder)?;
    std::fs::create_dir_all(&g.out_dir)?;
    let path = g.out_dir.join("cluster_stats.json");
    write_json(&path, &stats)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}
