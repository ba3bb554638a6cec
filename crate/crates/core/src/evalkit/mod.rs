//! Benchmark loading and scoring in loglikelihood and generation modes.

mod ica;
mod loaders;
mod report;
mod scoring;
mod task;
mod textmetrics;

use std::path::PathBuf;

use thiserror::Error;

use crate::llm::LlmError;

pub use ica::{build_ica_prompt, SystemPromptId, BASELINE_PROMPT};
pub use loaders::{load_task, BBQ_CATEGORIES};
pub use report::{
    format_percent, recompute_aggregates, relative_improvement, run_eval, Aggregates, BaselineDelta,
    EvalConfig, EvalMode, EvalReport, ItemRecord, ItemStatus, ReportFamily,
};
pub use scoring::{
    argmax, choice_letter, decide_multiple_choice, extract_choice, generation_request, mc2_from_loglikelihoods,
    mc_context, mc_continuation, render_generation_prompt, run_generate_until, score_multiple_choice,
    score_truthfulqa_mc2, ExtractRule, Extraction, GenerationOutcome, Mc2Outcome, McOutcome, DEFAULT_MAX_TOKENS,
    DEFAULT_STOP, OVERLAP_THRESHOLD,
};
pub use task::{BenchmarkItem, Gold, TaskId};
pub use textmetrics::{bleu, rouge, truthfulqa_gen_accuracy, GenAccuracy, RougeScores};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: record {record}: {reason}")]
    Schema {
        path: PathBuf,
        record: usize,
        reason: String,
    },
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{0}")]
    Input(String),
    #[error("invalid eval config: {0}")]
    Config(String),
    #[error("baseline must be > 0, got {0}")]
    Domain(f64),
    #[error("cannot compare reports: {0}")]
    Incomparable(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}
