//! Chat-completion and logprob-scoring client for OpenAI-compatible
//! endpoints, plus a deterministic fixture-driven mock backend.

mod client;
mod config;
mod http;
pub mod mock;
mod types;

pub use client::{map_bounded, Backend, Client};
pub use config::{EndpointConfig, DEFAULT_API_KEY_ENV};
pub use http::HttpBackend;
pub use mock::{ContinuationOverride, FixtureLine, MockBackend, MockMatch, MockReply, TokenTable};
pub use types::{
    prompt_digest, ChatMessage, ChatRequest, ChatResponse, FinishReason, Role, ScoredContinuation,
    Usage,
};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LlmError {
    /// Invalid request or a non-retryable 4xx response.
    #[error("request error: {0}")]
    Request(String),
    /// Retryable failure (timeout, 429, 5xx). Surfaces to callers only via
    /// [`LlmError::Transport`] once retries are exhausted.
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("model refused: {0}")]
    Refusal(String),
    #[error("endpoint lacks capability: {0}")]
    Capability(String),
    #[error("cannot isolate continuation tokens: {0}")]
    Alignment(String),
}
