use std::collections::HashMap;

use clusterq::aggregation::{aggregate_fw, aggregate_scoredw, aggregate_simdw, Embedded};
use clusterq::config::Gain;
use clusterq::embedding::EmbeddingVector;
use clusterq::evaluation::{holm_adjust, ndcg_at_k};
use clusterq::llm::{parse_score_output, ScoreList};
use clusterq::qerm::{
    featurize, infer_logit, label_for, loss_and_gradient, sigmoid, QermExample, QermModel,
};
use clusterq::types::ClusterSet;
use proptest::prelude::*;

fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim)
        .prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    (1usize..8).prop_flat_map(|dim| {
        (
            nonzero_vec(dim),
            prop::collection::vec(nonzero_vec(dim), 0..=3),
            prop::collection::vec(1u32..=100, 3),
        )
            .prop_map(|(init, refs, scores)| {
                let scores = scores.into_iter().take(refs.len()).map(f64::from).collect();
                (init, refs, scores)
            })
    })
}

fn embed(text: &str, v: &[f64]) -> Embedded {
    Embedded::new(text, EmbeddingVector::new(v.to_vec()).unwrap())
}

fn examples() -> impl Strategy<Value = Vec<QermExample>> {
    (1usize..5).prop_flat_map(|d| {
        prop::collection::vec((prop::collection::vec(-3.0f64..3.0, d), 0u8..=1), 1..20).prop_map(
            |rows| {
                rows.into_iter()
                    .map(|(features, label)| QermExample {
                        qid: String::new(),
                        features,
                        label,
                        ndcg: 0.0,
                    })
                    .collect()
            },
        )
    })
}

proptest! {
    #[test]
    fn weights_follow_their_filters((init, refs, scores) in instance(), w0 in 0.0f64..=1.0, theta in -1.0f64..1.0, score_t in 1.0f64..=100.0) {
        let e_init = embed("q", &init);
        let e_refs: Vec<Embedded> = refs.iter().map(|r| embed("r", r)).collect();

        let fw = aggregate_fw(&e_init, &e_refs, w0).unwrap();
        prop_assert_eq!(fw.bundle.w0, w0);
        let total: f64 = fw.bundle.entries.iter().map(|e| e.weight).sum();
        if !refs.is_empty() {
            prop_assert!((total - (1.0 - w0)).abs() < 1e-12);
        }

        let sim = aggregate_simdw(&e_init, &e_refs, w0, theta).unwrap();
        for e in &sim.bundle.entries {
            prop_assert_eq!(e.included, e.weight >= theta);
            prop_assert!(e.weight >= -1.0 - 1e-12 && e.weight <= 1.0 + 1e-12);
        }

        let sc = aggregate_scoredw(&e_init, &e_refs, &ScoreList(scores.clone()), w0, score_t).unwrap();
        for (e, s) in sc.bundle.entries.iter().zip(&scores) {
            prop_assert_eq!(e.included, *s >= score_t);
            prop_assert_eq!(e.weight, s / 100.0);
        }
    }

    #[test]
    fn ndcg_is_a_fraction(grades in prop::collection::vec(0u32..=3, 1..20), k in 1usize..25) {
        let ranked: Vec<String> = (0..grades.len()).map(|i| format!("d{i}")).collect();
        let qrels: HashMap<String, u32> = ranked.iter().cloned().zip(grades.iter().copied()).collect();
        let v = ndcg_at_k(&ranked, &qrels, k, Gain::Linear);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        let mut ideal = ranked.clone();
        ideal.sort_by_key(|d| std::cmp::Reverse(qrels[d]));
        let best = ndcg_at_k(&ideal, &qrels, k, Gain::Linear);
        prop_assert!(best >= v - 1e-12);
        if grades.iter().any(|&g| g > 0) {
            prop_assert!((best - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn labels_split_at_tau(ndcg in 0.0f64..=1.0, tau in 0.0f64..=1.0) {
        prop_assert_eq!(label_for(ndcg, tau) == 1, ndcg >= tau);
    }

    #[test]
    fn probability_is_monotone_in_the_logit(a in -50.0f64..50.0, b in -50.0f64..50.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(sigmoid(lo) <= sigmoid(hi));
        prop_assert!((0.0..=1.0).contains(&sigmoid(a)));
    }

    #[test]
    fn bias_raises_the_logit(features in prop::collection::vec(-2.0f64..2.0, 4), w in prop::collection::vec(-2.0f64..2.0, 4), b in -3.0f64..3.0, delta in 0.0f64..3.0) {
        let mut m = QermModel::zeros(4);
        m.weights = w;
        m.bias = b;
        let before = infer_logit(&m, &features).unwrap();
        m.bias = b + delta;
        prop_assert!(infer_logit(&m, &features).unwrap() >= before);
    }

    #[test]
    fn small_steps_do_not_raise_the_loss(data in examples()) {
        let d = data[0].features.len();
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut last = loss_and_gradient(&w, b, &data).0;
        for _ in 0..20 {
            let (_, gw, gb) = loss_and_gradient(&w, b, &data);
            for (wi, g) in w.iter_mut().zip(&gw) {
                *wi -= 1e-3 * g;
            }
            b -= 1e-3 * gb;
            let loss = loss_and_gradient(&w, b, &data).0;
            prop_assert!(loss <= last + 1e-12);
            last = loss;
        }
    }

    #[test]
    fn features_have_fixed_width(init in nonzero_vec(5), clusters in prop::collection::vec(nonzero_vec(5), 1..=3)) {
        let e = EmbeddingVector::new(init).unwrap();
        let c: Vec<EmbeddingVector> = clusters.iter().map(|v| EmbeddingVector::new(v.clone()).unwrap()).collect();
        let f = featurize(&e, &c).unwrap();
        prop_assert_eq!(f.len(), 3 * 5 + 2);
        prop_assert!(f.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn cluster_sets_hold_one_to_three(n in 0usize..7) {
        let texts: Vec<String> = (0..n).map(|i| format!("q{i}")).collect();
        prop_assert_eq!(ClusterSet::new(texts, 0).is_ok(), (1..=3).contains(&n));
    }

    #[test]
    fn score_parser_enforces_count_and_range(scores in prop::collection::vec(-10i32..120, 0..5), expected in 1usize..=3) {
        let raw = format!("[{}]", scores.iter().map(i32::to_string).collect::<Vec<_>>().join(", "));
        let valid = scores.len() == expected && scores.iter().all(|s| (1..=100).contains(s));
        prop_assert_eq!(parse_score_output(&raw, expected).is_ok(), valid);
    }

    #[test]
    fn holm_never_lowers_a_p_value(p in prop::collection::vec(0.0f64..=1.0, 1..10)) {
        let adj = holm_adjust(&p);
        for (a, r) in adj.iter().zip(&p) {
            prop_assert!(a >= r && *a <= 1.0);
        }
    }
}
