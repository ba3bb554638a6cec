//! Alignment data pipeline: corpus ingestion, synthetic SFT / preference
//! dataset generation, dataset metrics, benchmark evaluation and
//! training-recipe export.

pub mod cli;
pub mod corpus;
pub mod digest;
pub mod distill;
pub mod evalkit;
pub mod llm;
pub mod metrics;
pub mod trainplan;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
