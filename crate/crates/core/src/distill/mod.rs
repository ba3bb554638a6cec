//! Synthetic SFT and preference dataset generation.

pub mod control;
pub mod dataset;
pub mod generate;
pub mod parse;
pub mod principles;
pub mod prompts;

pub use control::{control_indices, sample_control_dataset};
pub use dataset::{
    detect_kind, manifest_path, Dataset, DatasetKind, DatasetManifest, PoSample, Sample,
    SampleMeta, SftSample, SkipRecord,
};
pub use generate::{
    generate_po_dataset, generate_sft_dataset, plan_po_requests, plan_sft_requests,
    GenerationOptions, PlannedRequest,
};
pub use parse::{parse_qa_response, ParseRule, ParsedQa};
pub use principles::{ExemplarPair, Principle, PrinciplesDoc};
pub use prompts::{render_po_prompt, render_sft_prompt, Polarity, PromptSet};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("cannot parse response: {0}")]
    Parse(String),
    #[error("dataset validation failed: {0}")]
    Validation(String),
    #[error("wrong dataset format: {0}")]
    Format(String),
    #[error("requested {requested} samples but only {available} available")]
    Size { requested: usize, available: usize },
    #[error("{failed} of {requested} generations failed; aborting (e.g. {examples})")]
    TooManyFailures {
        failed: usize,
        requested: usize,
        examples: String,
    },
    #[error("io: {0}")]
    Io(String),
}
