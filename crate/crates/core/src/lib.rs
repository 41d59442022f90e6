pub mod aggregation;
pub mod cache;
pub mod config;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod llm;
pub mod pipeline;
pub mod qerm;
pub mod retrieval;
pub mod types;
