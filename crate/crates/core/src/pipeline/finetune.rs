//! (initial query, reformulation, judge score) rows for external fine-tuning.

use serde::{Deserialize, Serialize};

use super::Pipeline;
use crate::error::Result;
use crate::llm::{parse_score_output, LlmGateway};
use crate::types::{PromptKind, Query};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetunePair {
    pub qid: String,
    pub q_init: String,
    pub q_ref: String,
    pub prompt_kind: PromptKind,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub qid: String,
    /// Empty when generation itself failed.
    pub q_ref: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FinetuneExport {
    pub pairs: Vec<FinetunePair>,
    pub skipped: Vec<SkippedPair>,
}

/// Generates reformulations with the pipeline's provider and has `judge`
/// score each one alone with the scoring prompt.
pub fn export_finetune_pairs(
    pipeline: &Pipeline,
    queries: &[Query],
    judge: &LlmGateway,
) -> Result<FinetuneExport> {
    let mut out = FinetuneExport::default();
    for q in queries {
        let generated = match pipeline.generate(q, 0) {
            Ok(g) => g,
            Err(e) => {
                out.skipped.push(SkippedPair {
                    qid: q.id.clone(),
                    q_ref: String::new(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        for g in generated {
            let inputs = std::slice::from_ref(&g.text);
            let scored = pipeline.ask_parsed(judge, PromptKind::Scoring, q, inputs, 0, |raw| {
                parse_score_output(raw, 1)
            });
            match scored {
                Ok(scores) => out.pairs.push(FinetunePair {
                    qid: q.id.clone(),
                    q_init: q.text.clone(),
                    q_ref: g.text,
                    prompt_kind: g.prompt_kind,
                    score: scores.values()[0],
                }),
                Err(e) => {
                    log::warn!("query `{}`: skipping `{}`: {e}", q.id, g.text);
                    out.skipped.push(SkippedPair {
                        qid: q.id.clone(),
                        q_ref: g.text,
                        reason: e.to_string(),
                    });
                }
            }
        }
    }
    Ok(out)
}
