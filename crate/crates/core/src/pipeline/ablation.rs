//! Parameter sweeps: one full run per grid point over shared caches.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::run::{run_pipeline, RunOptions};
use super::Pipeline;
use crate::config::{AggregationStrategy, PipelineConfig};
use crate::embedding::EmbeddingService;
use crate::error::{Error, Result};
use crate::evaluation::Qrels;
use crate::llm::LlmGateway;
use crate::qerm::QermModel;
use crate::retrieval::DocIndex;
use crate::types::{PromptKind, Query};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    W0,
    /// Grid values are prompt counts; each row averages every combination
    /// of that many generation prompts.
    Prompts,
    NPerPrompt,
    /// Maximum feedback-loop iterations; needs a reward model.
    Iterations,
    SimThreshold,
    ScoreThreshold,
}

impl AblationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::W0 => "w0",
            Self::Prompts => "prompts",
            Self::NPerPrompt => "n_per_prompt",
            Self::Iterations => "iterations",
            Self::SimThreshold => "sim_threshold",
            Self::ScoreThreshold => "score_threshold",
        }
    }

    /// The sweep used when none is given.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            Self::W0 => grid_range(0.3, 0.9, 0.1),
            Self::Prompts | Self::NPerPrompt | Self::Iterations => grid_range(1.0, 4.0, 1.0),
            Self::SimThreshold => grid_range(0.1, 0.3, 0.05),
            Self::ScoreThreshold => grid_range(40.0, 70.0, 10.0),
        }
    }
}

impl fmt::Display for AblationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(
            match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
                "w0" => Self::W0,
                "prompts" => Self::Prompts,
                "n_per_prompt" | "n" => Self::NPerPrompt,
                "iterations" => Self::Iterations,
                "sim_threshold" => Self::SimThreshold,
                "score_threshold" => Self::ScoreThreshold,
                other => return Err(Error::Invalid(format!("unknown ablation kind `{other}`"))),
            },
        )
    }
}

/// `start, start + step, ...` up to and including `stop`, with values
/// rounded to 9 decimals so `0.1 * 3` prints as `0.3`.
pub fn grid_range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    if step.is_nan() || step <= 0.0 || stop < start {
        return Vec::new();
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect()
}

/// Parses `a,b,c` or `start:stop:step`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = |s: &str| Error::Invalid(format!("bad grid value `{s}`"));
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    match parts.as_slice() {
        [a, b, c] => {
            let [a, b, c] = [a, b, c].map(|s| s.parse::<f64>().map_err(|_| bad(s)));
            Ok(grid_range(a?, b?, c?))
        }
        [""] => Ok(Vec::new()),
        [list] => list
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad(s)))
            .collect(),
        _ => Err(bad(text)),
    }
}

/// All `k`-element subsets of `items`, in lexicographic index order.
pub fn combinations<T: Copy>(items: &[T], k: usize) -> Vec<Vec<T>> {
    fn rec<T: Copy>(items: &[T], k: usize, start: usize, cur: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= items.len() {
        rec(items, k, 0, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: String,
    pub mean_ndcg: f64,
    /// Pipeline runs averaged into the row.
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub kind: AblationKind,
    pub k: usize,
    pub rows: Vec<AblationRow>,
    /// (setting, reason) for grid points that produced no row.
    pub failures: Vec<(String, String)>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},mean_ndcg@{},runs\n", self.kind, self.k);
        for r in &self.rows {
            writeln!(out, "{},{:.6},{}", r.setting, r.mean_ndcg, r.runs)
                .expect("writing to a String");
        }
        out
    }
}

/// Shared providers, index and evaluation data for a sweep.
pub struct AblationEnv<'a> {
    pub llm: Arc<LlmGateway>,
    pub embedder: Arc<EmbeddingService>,
    pub index: Arc<DocIndex>,
    pub queries: &'a [Query],
    pub qrels: &'a Qrels,
    pub model: Option<&'a QermModel>,
}

fn whole(v: f64, what: &str) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(Error::Invalid(format!(
            "{what} must be a positive integer, got {v}"
        )))
    }
}

fn mean_ndcg(config: PipelineConfig, env: &AblationEnv, qerm: bool, tag: &str) -> Result<f64> {
    let pipeline = Pipeline::new(
        config,
        env.llm.clone(),
        env.embedder.clone(),
        env.index.clone(),
    )?;
    let options = RunOptions {
        run_tag: tag.to_string(),
        qerm,
        model: env.model,
    };
    let out = run_pipeline(&pipeline, env.queries, env.qrels, &options)?;
    if out.report.per_query.is_empty() {
        return Err(Error::Invalid("no query was evaluated".into()));
    }
    Ok(out.report.mean)
}

fn point(
    base: &PipelineConfig,
    kind: AblationKind,
    value: f64,
    env: &AblationEnv,
) -> Result<(f64, usize)> {
    let mut cfg = base.clone();
    let tag = format!("{kind}={value}");
    match kind {
        AblationKind::W0 => cfg.w0 = value,
        AblationKind::NPerPrompt => cfg.n_per_prompt = whole(value, "n_per_prompt")?,
        AblationKind::SimThreshold => {
            cfg.aggregation_strategy = AggregationStrategy::SimDw;
            cfg.sim_threshold = value;
        }
        AblationKind::ScoreThreshold => {
            cfg.aggregation_strategy = AggregationStrategy::ScoreDw;
            cfg.score_threshold = value;
        }
        AblationKind::Iterations => {
            cfg.max_iterations = whole(value, "iterations")?;
            return Ok((mean_ndcg(cfg, env, true, &tag)?, 1));
        }
        AblationKind::Prompts => {
            let count = whole(value, "prompt count")?;
            let combos = combinations(&PromptKind::GENERATION, count);
            if combos.is_empty() {
                return Err(Error::Invalid(format!(
                    "prompt count {count} exceeds the {} generation prompts",
                    PromptKind::GENERATION.len()
                )));
            }
            let mut total = 0.0;
            for combo in &combos {
                let mut c = cfg.clone();
                c.prompt_kinds = combo.clone();
                total += mean_ndcg(c, env, false, &tag)?;
            }
            return Ok((total / combos.len() as f64, combos.len()));
        }
    }
    Ok((mean_ndcg(cfg, env, false, &tag)?, 1))
}

fn format_setting(v: f64) -> String {
    let s = format!("{v}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

pub fn ablate(
    base: &PipelineConfig,
    kind: AblationKind,
    grid: &[f64],
    env: &AblationEnv,
) -> Result<AblationTable> {
    if grid.is_empty() {
        return Err(Error::Invalid("ablation grid is empty".into()));
    }
    if kind == AblationKind::Iterations && env.model.is_none() {
        return Err(Error::Qerm(
            "the iterations sweep needs a trained model".into(),
        ));
    }
    let mut table = AblationTable {
        kind,
        k: base.ndcg_k,
        rows: Vec::with_capacity(grid.len()),
        failures: Vec::new(),
    };
    for &value in grid {
        let setting = format_setting(value);
        match point(base, kind, value, env) {
            Ok((mean_ndcg, runs)) => table.rows.push(AblationRow {
                setting,
                mean_ndcg,
                runs,
            }),
            Err(e) => {
                log::warn!("{kind}={setting} failed: {e}");
                table.failures.push((setting, e.to_string()));
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(
            grid_range(0.3, 0.9, 0.1),
            [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
        );
        assert_eq!(grid_range(40.0, 70.0, 10.0), [40.0, 50.0, 60.0, 70.0]);
        assert_eq!(grid_range(0.1, 0.3, 0.05), [0.1, 0.15, 0.2, 0.25, 0.3]);
        assert!(grid_range(1.0, 0.0, 1.0).is_empty());
    }

    #[test]
    fn grid_specs() {
        assert_eq!(parse_grid("1,2, 4").unwrap(), [1.0, 2.0, 4.0]);
        assert_eq!(parse_grid("1:3:1").unwrap(), [1.0, 2.0, 3.0]);
        assert!(parse_grid("").unwrap().is_empty());
        assert!(parse_grid("a").is_err());
    }

    #[test]
    fn combination_counts() {
        let items = [1, 2, 3, 4];
        let counts: Vec<usize> = (1..=4).map(|k| combinations(&items, k).len()).collect();
        assert_eq!(counts, [4, 6, 4, 1]);
        assert_eq!(combinations(&items, 2)[0], [1, 2]);
        assert!(combinations(&items, 5).is_empty());
    }

    #[test]
    fn settings_print_plainly() {
        assert_eq!(format_setting(0.3), "0.3");
        assert_eq!(format_setting(60.0), "60");
    }

    #[test]
    fn kinds_parse() {
        assert_eq!(
            "n-per-prompt".parse::<AblationKind>().unwrap(),
            AblationKind::NPerPrompt
        );
        assert!("nope".parse::<AblationKind>().is_err());
    }
}
