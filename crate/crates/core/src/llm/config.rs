use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::LlmError;

pub const DEFAULT_API_KEY_ENV: &str = "ALIGN_FORGE_API_KEY";

/// Endpoint identity and transport limits.
///
/// Only the *name* of the environment variable holding the API key is
/// stored; the secret itself is read at request time and never kept here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_id: String,
    pub api_key_ref: String,
    pub timeout_secs: u64,
    pub max_parallel: usize,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    /// Whether the completions endpoint honours `logprobs` with `echo`.
    pub supports_logprobs: bool,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model_id: "gpt-4-turbo".into(),
            api_key_ref: DEFAULT_API_KEY_ENV.into(),
            timeout_secs: 120,
            max_parallel: 4,
            max_retries: 5,
            backoff_base_ms: 500,
            backoff_max_ms: 30_000,
            supports_logprobs: true,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.max_parallel == 0 {
            return Err(LlmError::Request("max_parallel must be at least 1".into()));
        }
        if self.model_id.is_empty() {
            return Err(LlmError::Request("model_id is empty".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    /// Upper bound of the full-jitter sleep before retry number `attempt` (0-based).
    pub fn backoff_cap(&self, attempt: u32) -> Duration {
        let exp = self
            .backoff_base_ms
            .saturating_mul(1u64.checked_shl(attempt).unwrap_or(u64::MAX));
        Duration::from_millis(exp.min(self.backoff_max_ms))
    }
}
