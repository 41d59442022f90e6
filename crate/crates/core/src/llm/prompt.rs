//! Prompt templates for the generation, clustering and scoring calls.
//!
//! Templates use two markers: `{query}` for the initial query and
//! `{generated}` for the list produced by an earlier stage. Rendering is a
//! single left-to-right pass, so marker-like text inside a query is never
//! re-expanded.

use crate::error::{Error, Result};
use crate::types::{PromptKind, Query};

pub const QUERY_MARKER: &str = "{query}";
pub const GENERATED_MARKER: &str = "{generated}";

const CONTEXTUAL_EXPANSION: &str = "You are a contextual expansion expert. Your task is to understand the core intent of the original query and provide a refined, contextually expanded answer. Provide a clear and concise response based on the original query.\nBelow is the query: {query}";

const DETAIL_SPECIFIC: &str = "You are a detail-specific expert. Your task is to understand the core intent of the original query and provide a refined, detailed answer focusing on particular details or subtopics directly related to the query. Provide a clear and concise response based on the original query.\nBelow is the query: {query}";

const ASPECT_SPECIFIC: &str = "You are an aspect-specific inquiry expert. Your task is to understand the core intent of the original query and provide a refined answer focusing on a specific aspect or dimension within the topic. Provide a clear and concise response based on the original query.\nBelow is the query: {query}";

const CLARITY_ENHANCEMENT: &str = "You are a clarity-enhancement expert. Your task is to understand the core intent of the original query and reformulate it to enhance clarity and specificity. Focus on eliminating ambiguity and ensuring the query is straightforward, which aids in retrieving the most relevant contexts. Provide a clear and concise response based on the original query.\nBelow is the query: {query}";

const CLUSTERING_GENERATION: &str = "You are an expert in clustering and query refinement. Your task is to review the original query alongside the generated queries, and then cluster them into 1 to 3 groups based on their similarity and relevance.\nThe number of clusters should be determined dynamically. Focus primarily on the relationship of the generated queries to the original query. For each identified cluster, provide only one refined query that incorporates elements from the original and generated queries within that cluster with useful information for document retrieval.\nThe output should be presented in JSON format, structured as follows:\n{'cluster1': 'refined_query_1', 'cluster2': 'refined_query_2', 'cluster3': 'refined_query_3'}\nThe output must be restricted to 1 to 3 groups.\nBelow is the query: {query}\nGenerated queries:\n{generated}";

const SCORING: &str = "You are an expert in scoring cluster queries. Evaluate the clustering of queries using the following criteria for each cluster: Relevance, Specificity, Clarity, Comprehensiveness, and Usefulness for retrieval.\nAssign a score from 1 to 100, where 1 is the lowest and 100 is the highest performance in relation to the original query. Avoid defaulting to high scores unless they are clearly justified. Carefully consider both the strengths and weaknesses of each cluster.\nFor instance, a cluster with relevant but not highly specific results might score between 40 and 60, while a cluster that is both highly relevant and specific might score between 70 and 100. Conversely, a cluster lacking clarity or comprehensiveness should score lower, between 10 and 30.\nProvide scores that accurately reflect the variation in quality across clusters. List your scores for each cluster in the following format: [score_cluster1, score_cluster2, score_cluster3].\nReturn your scores in a list format only, without additional commentary.\nInitial Query: {query}\nCluster-Generated Queries : {generated}";

pub fn template(kind: PromptKind) -> &'static str {
    match kind {
        PromptKind::ContextualExpansion => CONTEXTUAL_EXPANSION,
        PromptKind::DetailSpecific => DETAIL_SPECIFIC,
        PromptKind::AspectSpecific => ASPECT_SPECIFIC,
        PromptKind::ClarityEnhancement => CLARITY_ENHANCEMENT,
        PromptKind::ClusteringGeneration => CLUSTERING_GENERATION,
        PromptKind::Scoring => SCORING,
    }
}

/// Formats the generated-query list for the clustering prompt: one numbered line per query.
fn format_generated(items: &[String]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, q)| format!("{}. {}", i + 1, q.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Formats cluster representatives for the scoring prompt, in the same
/// keyed layout the clustering step returns.
fn format_clusters(items: &[String]) -> String {
    let map: serde_json::Map<String, serde_json::Value> = items
        .iter()
        .enumerate()
        .map(|(i, c)| {
            (
                format!("cluster{}", i + 1),
                serde_json::Value::String(c.clone()),
            )
        })
        .collect();
    serde_json::Value::Object(map).to_string()
}

pub fn render_prompt(kind: PromptKind, query: &Query, extra: Option<&[String]>) -> Result<String> {
    let generated = match (kind.is_generation(), extra) {
        (true, _) => None,
        (false, None) => {
            return Err(Error::Prompt(format!(
                "{kind} prompt needs the generated-query list"
            )))
        }
        (false, Some([])) => {
            return Err(Error::Prompt(format!(
                "{kind} prompt got an empty generated-query list"
            )))
        }
        (false, Some(items)) => Some(match kind {
            PromptKind::Scoring => format_clusters(items),
            _ => format_generated(items),
        }),
    };
    Ok(fill(
        template(kind),
        query.text.trim(),
        generated.as_deref(),
    ))
}

fn fill(template: &str, query: &str, generated: Option<&str>) -> String {
    let mut out = String::with_capacity(template.len() + query.len());
    let mut rest = template;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix(QUERY_MARKER) {
            out.push_str(query);
            rest = after;
        } else if let (true, Some(g)) = (tail.starts_with(GENERATED_MARKER), generated) {
            out.push_str(g);
            rest = &tail[GENERATED_MARKER.len()..];
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out
}
