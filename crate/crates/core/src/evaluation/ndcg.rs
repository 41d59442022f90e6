use std::collections::HashMap;

use crate::config::Gain;

fn gain(grade: u32, kind: Gain) -> f64 {
    match kind {
        Gain::Linear => f64::from(grade),
        Gain::Exponential => 2f64.powi(grade as i32) - 1.0,
    }
}

/// Discount for a 1-based rank.
fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// nDCG at cutoff `k` in the trec_eval `ndcg_cut` sense: DCG over the first
/// `k` ranked documents divided by the DCG of the best possible ordering of
/// all judged grades. Unjudged documents have grade 0; a query with no
/// positive grade scores 0.
pub fn ndcg_at_k<S: AsRef<str>>(
    ranked: &[S],
    judgments: &HashMap<String, u32>,
    k: usize,
    kind: Gain,
) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, doc)| {
            let grade = judgments.get(doc.as_ref()).copied().unwrap_or(0);
            gain(grade, kind) * discount(i + 1)
        })
        .sum();

    let mut ideal: Vec<u32> = judgments.values().copied().filter(|&g| g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g, kind) * discount(i + 1))
        .sum();

    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(pairs: &[(&str, u32)]) -> HashMap<String, u32> {
        pairs.iter().map(|(d, g)| (d.to_string(), *g)).collect()
    }

    #[test]
    fn ideal_single_doc() {
        assert_eq!(
            ndcg_at_k(&["d1"], &row(&[("d1", 1)]), 10, Gain::Linear),
            1.0
        );
    }

    #[test]
    fn relevant_at_rank_two() {
        let v = ndcg_at_k(
            &["d0", "d1"],
            &row(&[("d0", 0), ("d1", 1)]),
            10,
            Gain::Linear,
        );
        // (1 / log2 3) / (1 / log2 2)
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((v - 0.63093).abs() < 1e-5);
    }

    #[test]
    fn no_relevant_docs() {
        assert_eq!(
            ndcg_at_k(&["d0"], &row(&[("d0", 0)]), 10, Gain::Linear),
            0.0
        );
        assert_eq!(ndcg_at_k(&["d0"], &row(&[]), 10, Gain::Linear), 0.0);
    }

    #[test]
    fn cutoff_ignores_tail() {
        let judgments = row(&[("a", 1)]);
        assert_eq!(
            ndcg_at_k(&["x", "y", "a"], &judgments, 2, Gain::Linear),
            0.0
        );
    }

    #[test]
    fn exponential_gain_differs_for_graded() {
        let judgments = row(&[("a", 1), ("b", 3)]);
        let lin = ndcg_at_k(&["a", "b"], &judgments, 10, Gain::Linear);
        let exp = ndcg_at_k(&["a", "b"], &judgments, 10, Gain::Exponential);
        // linear: (1 + 3/log2 3) / (3 + 1/log2 3); exponential: (1 + 7/log2 3) / (7 + 1/log2 3)
        let l3 = 3f64.log2();
        assert!((lin - (1.0 + 3.0 / l3) / (3.0 + 1.0 / l3)).abs() < 1e-12);
        assert!((exp - (1.0 + 7.0 / l3) / (7.0 + 1.0 / l3)).abs() < 1e-12);
    }
}
