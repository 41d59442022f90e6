mod common;

use std::sync::Arc;

use clusterq::cache::ContentCache;
use clusterq::config::{AggregationStrategy, LlmProviderKind, LlmSettings};
use clusterq::embedding::MockEmbedder;
use clusterq::pipeline::artifacts::{read_jsonl, write_jsonl, ClusterRecord};
use clusterq::pipeline::dataset::document_text;
use clusterq::pipeline::{
    build_gateway, export_finetune_pairs, run_pipeline, RunManifest, RunOptions,
};
use clusterq::qerm::{build_training_set, feature_dim, train, TrainingSet};
use clusterq::retrieval::read_corpus;
use clusterq::types::PromptKind;

#[test]
fn committed_corpus_embeddings_match_the_mock_embedder() {
    let toy = common::toy(common::toy_config("llm.jsonl", AggregationStrategy::SimDw));
    let mock = MockEmbedder::new(64, 0);
    let docs = read_corpus(&common::toy_dir().join("corpus.jsonl")).unwrap();
    let index = &toy.dataset.index;
    assert_eq!(index.len(), docs.len());
    for (i, id) in index.doc_ids().iter().enumerate() {
        let doc = docs.iter().find(|d| &d.id == id).unwrap();
        let want = mock.embed_text(&document_text(&doc.title, &doc.text));
        for (a, b) in index.row(i).iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{id}");
        }
    }
}

#[test]
fn only_score_weighting_asks_for_scores() {
    for strategy in [
        AggregationStrategy::Dc,
        AggregationStrategy::Fw,
        AggregationStrategy::SimDw,
        AggregationStrategy::ScoreDw,
    ] {
        let toy = common::toy(common::toy_config("llm.jsonl", strategy));
        let out = run_pipeline(
            &toy.pipeline,
            &toy.dataset.queries,
            &toy.dataset.qrels,
            &RunOptions::default(),
        )
        .unwrap();
        assert!(out.failures.is_empty(), "{strategy:?}: {:?}", out.failures);
        let scoring = toy.llm.calls().count(PromptKind::Scoring);
        if strategy == AggregationStrategy::ScoreDw {
            assert_eq!(scoring, 3);
        } else {
            assert_eq!(scoring, 0, "{strategy:?}");
        }
        assert_eq!(toy.llm.calls().count(PromptKind::ClusteringGeneration), 3);
    }
}

#[test]
fn dc_concatenates_cluster_representatives() {
    let toy = common::toy(common::toy_config("llm.jsonl", AggregationStrategy::Dc));
    let out = run_pipeline(
        &toy.pipeline,
        &toy.dataset.queries,
        &toy.dataset.qrels,
        &RunOptions::default(),
    )
    .unwrap();
    let q3 = out.traces.iter().find(|t| t.qid == "q3").unwrap();
    assert_eq!(
        q3.fused_text.as_deref(),
        Some("how to brew coffee [SEP] how to brew coffee with a french press [SEP]")
    );
}

#[test]
fn reward_mode_without_a_model_makes_no_calls() {
    let toy = common::toy(common::toy_config("llm.jsonl", AggregationStrategy::SimDw));
    let options = RunOptions {
        run_tag: "x".into(),
        qerm: true,
        model: None,
    };
    assert!(run_pipeline(
        &toy.pipeline,
        &toy.dataset.queries,
        &toy.dataset.qrels,
        &options
    )
    .is_err());
    assert_eq!(toy.llm.calls().total(), 0);
}

#[test]
fn warm_disk_cache_skips_the_provider() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::toy_config("llm.jsonl", AggregationStrategy::ScoreDw);
    let cold = common::toy_with_cache(
        cfg.clone(),
        Arc::new(ContentCache::on_disk(dir.path()).unwrap()),
    );
    let a = run_pipeline(
        &cold.pipeline,
        &cold.dataset.queries,
        &cold.dataset.qrels,
        &RunOptions::default(),
    )
    .unwrap();
    assert!(cold.llm.calls().total() > 0);

    let warm = common::toy_with_cache(cfg, Arc::new(ContentCache::on_disk(dir.path()).unwrap()));
    let b = run_pipeline(
        &warm.pipeline,
        &warm.dataset.queries,
        &warm.dataset.qrels,
        &RunOptions::default(),
    )
    .unwrap();
    assert_eq!(warm.llm.calls().total(), 0);
    assert_eq!(a.run, b.run);
    assert_eq!(a.report, b.report);
}

#[test]
fn finetune_export_uses_judge_scores() {
    let toy = common::toy(common::toy_config("llm.jsonl", AggregationStrategy::SimDw));
    let judge_settings = LlmSettings {
        provider: LlmProviderKind::Fixture,
        fixture_path: Some(common::toy_dir().join("judge.jsonl")),
        ..LlmSettings::default()
    };
    let judge = build_gateway(&judge_settings, 0, Arc::new(ContentCache::in_memory())).unwrap();
    let export = export_finetune_pairs(&toy.pipeline, &toy.dataset.queries, &judge).unwrap();
    assert!(!export.pairs.is_empty() && export.pairs.len() <= 60);
    for p in &export.pairs {
        match p.qid.as_str() {
            "q1" => assert_eq!(p.score, 80.0),
            "q2" => assert_eq!(p.score, 72.0),
            other => panic!("unexpected pair for {other}"),
        }
        assert!(p.prompt_kind.is_generation());
    }
    assert!(export.skipped.iter().all(|s| s.qid == "q3"));
    assert!(!export.skipped.is_empty());
}

#[test]
fn training_set_and_model_from_toy_data() {
    let toy = common::toy(common::toy_config("llm.jsonl", AggregationStrategy::SimDw));
    let cfg = toy.pipeline.config();
    let set = build_training_set(
        &toy.dataset.queries,
        &toy.pipeline,
        &toy.dataset.qrels,
        cfg.ndcg_k,
        cfg.gain,
        cfg.ndcg_label_threshold,
    );
    assert_eq!(set.examples.len(), 3);
    assert!(set.skipped.is_empty());
    let dim = feature_dim(toy.dataset.index.dim());
    for ex in &set.examples {
        assert_eq!(ex.features.len(), dim);
        assert_eq!(ex.label, u8::from(ex.ndcg >= 0.3));
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.jsonl");
    set.write_jsonl(&path).unwrap();
    let back = TrainingSet::read_jsonl(&path).unwrap();
    assert_eq!(back, set.examples);

    let model = train(&back, 50, 0.1, 7).unwrap();
    assert_eq!(model.feature_dim, dim);
    let again = train(&back, 50, 0.1, 7).unwrap();
    assert_eq!(model, again);
}

#[test]
fn cluster_artifacts_round_trip() {
    let toy = common::toy(common::toy_config("llm.jsonl", AggregationStrategy::SimDw));
    let out = run_pipeline(
        &toy.pipeline,
        &toy.dataset.queries,
        &toy.dataset.qrels,
        &RunOptions::default(),
    )
    .unwrap();
    let records: Vec<ClusterRecord> = out
        .traces
        .iter()
        .map(|t| ClusterRecord {
            qid: t.qid.clone(),
            query: String::new(),
            iteration: t.iteration,
            clusters: t.clusters.clone(),
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clusters.jsonl");
    write_jsonl(&path, &records).unwrap();
    assert_eq!(read_jsonl::<ClusterRecord>(&path).unwrap(), records);
    let sizes: Vec<usize> = records.iter().map(|r| r.clusters.len()).collect();
    assert_eq!(sizes, [3, 2, 1]);
}

#[test]
fn manifest_records_provider_calls() {
    let toy = common::toy(common::toy_config(
        "llm.jsonl",
        AggregationStrategy::ScoreDw,
    ));
    run_pipeline(
        &toy.pipeline,
        &toy.dataset.queries,
        &toy.dataset.qrels,
        &RunOptions::default(),
    )
    .unwrap();
    let manifest = RunManifest::new(&toy.pipeline);
    assert_eq!(manifest.provider_calls.get(&PromptKind::Scoring), Some(&3));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.json");
    manifest.write(&path).unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["seed"], toy.pipeline.config().seed);
    assert!(v["config"].is_object());
}

#[test]
fn oracle_text_embeddings_match_the_mock_embedder() {
    let mock = MockEmbedder::new(64, 0);
    let text = std::fs::read_to_string(common::toy_dir().join("text_embeddings.jsonl")).unwrap();
    let mut rows = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        let want = mock.embed_text(row["id"].as_str().unwrap());
        let got: Vec<f64> = serde_json::from_value(row["vector"].clone()).unwrap();
        assert_eq!(got, want, "{}", row["id"]);
        rows += 1;
    }
    assert_eq!(rows, 9);
}
