//! Dataset-quality measures: entropy, mutual information, KL divergence and
//! perplexity.

mod distribution;
mod information;
mod perplexity;
mod report;

use thiserror::Error;

use crate::llm::LlmError;

pub use distribution::{build_distribution, tokenize, words, TokenDistribution, TokenUnit};
pub use information::{
    corpus_entropy_stats, distribution_from, kl_divergence_normalized, kl_divergence_with_alpha,
    mutual_information, mutual_information_normalized, shannon_entropy_bits,
    shannon_entropy_normalized, EntropyStats, KlDivergence, MutualInformation, KL_ALPHA,
};
pub use perplexity::{
    dataset_perplexity, po_conversations, sft_conversations, PerplexityFormat, PerplexityReport,
    PerplexityScope, SampleFailure,
};
pub use report::{MetricParams, MetricReport};

/// Bumped whenever an estimator changes in a way that moves reported values.
pub const ESTIMATOR_VERSION: &str = "af-metrics-1";

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("no tokens to estimate a distribution from")]
    EmptySupport,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("all {0} samples failed to score")]
    AllFailed(usize),
}
