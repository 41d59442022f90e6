//! Paired t-tests across systems with Holm-Bonferroni step-down correction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub n: usize,
    /// Mean of `b - a`.
    pub mean_diff: f64,
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TTestOutcome {
    Test(PairedTTest),
    /// The differences have zero variance, so no t statistic exists.
    Degenerate {
        n: usize,
        mean_diff: f64,
    },
}

pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestOutcome> {
    if a.len() != b.len() {
        return Err(Error::Misaligned(format!(
            "{} vs {} observations",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Invalid(format!(
            "a paired t-test needs n >= 2, got {n}"
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    // rounding noise from constant differences counts as zero variance
    if var <= 1e-20 * (1.0 + mean * mean) {
        return Ok(TTestOutcome::Degenerate { n, mean_diff: mean });
    }
    let t = mean / (var / nf).sqrt();
    let df = nf - 1.0;
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1 is valid");
    let p_value = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTestOutcome::Test(PairedTTest {
        n,
        mean_diff: mean,
        t,
        df,
        p_value,
    }))
}

/// Holm step-down adjustment, returned in input order. With p sorted
/// ascending, `adj_(i) = min(1, max_{j <= i} (m - j + 1) * p_(j))`.
pub fn holm_adjust(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (j, &idx) in order.iter().enumerate() {
        let scaled = ((m - j) as f64 * p_values[idx]).min(1.0);
        running = running.max(scaled);
        adjusted[idx] = running;
    }
    adjusted
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub system: String,
    pub test: TTestOutcome,
    /// Holm-adjusted p-value; `None` for degenerate comparisons.
    pub adjusted_p: Option<f64>,
}

/// Compares every system against `reference` on per-query scores, then
/// applies Holm's correction across the non-degenerate comparisons.
pub fn paired_ttest_holm(
    reference: &BTreeMap<String, f64>,
    systems: &[(String, BTreeMap<String, f64>)],
) -> Result<Vec<Comparison>> {
    let mut comparisons = Vec::with_capacity(systems.len());
    for (name, scores) in systems {
        if scores.len() != reference.len() || !scores.keys().eq(reference.keys()) {
            let missing = reference
                .keys()
                .find(|k| !scores.contains_key(*k))
                .or_else(|| scores.keys().find(|k| !reference.contains_key(*k)));
            return Err(Error::Misaligned(format!(
                "system `{name}` differs from the reference at query `{}`",
                missing.map(String::as_str).unwrap_or("?")
            )));
        }
        let a: Vec<f64> = reference.values().copied().collect();
        let b: Vec<f64> = scores.values().copied().collect();
        comparisons.push(Comparison {
            system: name.clone(),
            test: paired_t_test(&a, &b)?,
            adjusted_p: None,
        });
    }
    let tested: Vec<(usize, f64)> = comparisons
        .iter()
        .enumerate()
        .filter_map(|(i, c)| match &c.test {
            TTestOutcome::Test(t) => Some((i, t.p_value)),
            TTestOutcome::Degenerate { .. } => None,
        })
        .collect();
    let raw: Vec<f64> = tested.iter().map(|(_, p)| *p).collect();
    for ((i, _), adj) in tested.iter().zip(holm_adjust(&raw)) {
        comparisons[*i].adjusted_p = Some(adj);
    }
    Ok(comparisons)
}
