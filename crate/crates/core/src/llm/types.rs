use std::fmt;

use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::digest::sha256_parts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_instruction: Option<String>,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    /// Single user turn with default sampling settings.
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            system_instruction: None,
            messages: vec![ChatMessage::user(content)],
            temperature: 0.0,
            max_tokens: 1024,
            stop: Vec::new(),
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::Request("request has no messages".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::Request(format!(
                "temperature must be a finite value >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::Request("max_tokens must be positive".into()));
        }
        let mut rest = self.messages.as_slice();
        if let Some((first, tail)) = rest.split_first() {
            if first.role == Role::System {
                if self.system_instruction.is_some() {
                    return Err(LlmError::Request(
                        "system message present alongside system_instruction".into(),
                    ));
                }
                rest = tail;
            }
        }
        for (i, msg) in rest.iter().enumerate() {
            let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
            if msg.role != expected {
                return Err(LlmError::Request(format!(
                    "message {i} after any system message has role {}, expected {expected}",
                    msg.role
                )));
            }
        }
        Ok(())
    }

    /// Messages as sent on the wire, with `system_instruction` folded in
    /// as a leading system message.
    pub fn wire_messages(&self) -> Vec<ChatMessage> {
        let mut out = Vec::with_capacity(self.messages.len() + 1);
        if let Some(sys) = &self.system_instruction {
            out.push(ChatMessage::system(sys.clone()));
        }
        out.extend(self.messages.iter().cloned());
        out
    }

    pub fn digest(&self) -> String {
        prompt_digest(&self.wire_messages())
    }
}

/// Digest of the prompt content of a request: roles and contents in order.
/// Sampling parameters are excluded so fixtures survive temperature changes.
pub fn prompt_digest(messages: &[ChatMessage]) -> String {
    sha256_parts(
        messages
            .iter()
            .flat_map(|m| [m.role.as_str(), m.content.as_str()]),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    ContentFilter,
    Other,
}

impl FinishReason {
    pub fn from_wire(s: Option<&str>) -> Self {
        match s {
            Some("stop") | Some("eos") | None => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            Some("content_filter") => FinishReason::ContentFilter,
            Some(_) => FinishReason::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
    pub latency_ms: u64,
    /// Number of retries performed before this response was obtained.
    pub retry_count: u32,
}

/// Log-likelihood of a continuation given a context, natural log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredContinuation {
    pub loglikelihood: f64,
    pub token_count: usize,
    pub is_greedy: bool,
}
