use std::collections::HashMap;

use reqwest::blocking::{Client as HttpClient, Response};
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    Backend, ChatRequest, ChatResponse, EndpointConfig, FinishReason, LlmError,
    ScoredContinuation, Usage,
};

/// OpenAI-compatible transport: `/chat/completions` for generation and
/// `/completions` with `echo` + `logprobs` for scoring.
pub struct HttpBackend {
    http: HttpClient,
}

impl HttpBackend {
    pub fn new(cfg: &EndpointConfig) -> Result<Self, LlmError> {
        let http = HttpClient::builder()
            .timeout(cfg.timeout())
            .build()
            .map_err(|e| LlmError::Request(format!("cannot build http client: {e}")))?;
        Ok(Self { http })
    }

    fn post(&self, cfg: &EndpointConfig, path: &str, body: &Value) -> Result<Response, LlmError> {
        let url = format!("{}/{}", cfg.base_url.trim_end_matches('/'), path);
        let mut builder = self.http.post(&url).json(body);
        if let Ok(key) = std::env::var(&cfg.api_key_ref) {
            if !key.is_empty() {
                builder = builder.bearer_auth(key);
            }
        }
        builder.send().map_err(|e| {
            // reqwest errors carry the URL but never request headers
            LlmError::Transient(format!("{path}: {}", e.without_url()))
        })
    }
}

fn classify(status: StatusCode, body: &str) -> LlmError {
    let snippet: String = body.chars().take(300).collect();
    if status == StatusCode::TOO_MANY_REQUESTS
        || status == StatusCode::REQUEST_TIMEOUT
        || status.is_server_error()
    {
        LlmError::Transient(format!("http {status}: {snippet}"))
    } else {
        LlmError::Request(format!("http {status}: {snippet}"))
    }
}

#[derive(Deserialize)]
struct ChatWire {
    choices: Vec<ChatChoiceWire>,
    #[serde(default)]
    usage: Option<UsageWire>,
}

#[derive(Deserialize)]
struct ChatChoiceWire {
    message: MessageWire,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct MessageWire {
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    refusal: Option<String>,
}

#[derive(Deserialize)]
struct UsageWire {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct CompletionWire {
    choices: Vec<CompletionChoiceWire>,
}

#[derive(Deserialize)]
struct CompletionChoiceWire {
    #[serde(default)]
    logprobs: Option<LogprobsWire>,
}

#[derive(Deserialize)]
struct LogprobsWire {
    tokens: Vec<String>,
    token_logprobs: Vec<Option<f64>>,
    text_offset: Vec<usize>,
    #[serde(default)]
    top_logprobs: Option<Vec<Option<HashMap<String, f64>>>>,
}

impl Backend for HttpBackend {
    fn chat(&self, cfg: &EndpointConfig, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let mut body = json!({
            "model": cfg.model_id,
            "messages": req.wire_messages(),
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        if !req.stop.is_empty() {
            body["stop"] = json!(req.stop);
        }
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        let resp = self.post(cfg, "chat/completions", &body)?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| LlmError::Transient(format!("reading body: {}", e.without_url())))?;
        if !status.is_success() {
            return Err(classify(status, &text));
        }
        let wire: ChatWire = serde_json::from_str(&text)
            .map_err(|e| LlmError::Request(format!("unparsable chat response: {e}")))?;
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| LlmError::Request("chat response has no choices".into()))?;
        if let Some(refusal) = choice.message.refusal.filter(|r| !r.is_empty()) {
            return Err(LlmError::Refusal(refusal));
        }
        let finish_reason = FinishReason::from_wire(choice.finish_reason.as_deref());
        if finish_reason == FinishReason::ContentFilter {
            return Err(LlmError::Refusal("content filter".into()));
        }
        let usage = wire
            .usage
            .map(|u| Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            })
            .unwrap_or_default();
        Ok(ChatResponse {
            text: choice.message.content.unwrap_or_default(),
            finish_reason,
            usage,
            latency_ms: 0,
            retry_count: 0,
        })
    }

    fn score(
        &self,
        cfg: &EndpointConfig,
        context: &str,
        continuation: &str,
    ) -> Result<ScoredContinuation, LlmError> {
        let body = json!({
            "model": cfg.model_id,
            "prompt": format!("{context}{continuation}"),
            "max_tokens": 0,
            "echo": true,
            "logprobs": 1,
            "temperature": 0.0,
        });
        let resp = self.post(cfg, "completions", &body)?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| LlmError::Transient(format!("reading body: {}", e.without_url())))?;
        if matches!(status.as_u16(), 400 | 404 | 405 | 422 | 501) {
            return Err(LlmError::Capability(format!(
                "completions endpoint rejected echo+logprobs scoring (http {status}); \
                 use generate_until evaluation instead"
            )));
        }
        if !status.is_success() {
            return Err(classify(status, &text));
        }
        let wire: CompletionWire = serde_json::from_str(&text)
            .map_err(|e| LlmError::Request(format!("unparsable completion response: {e}")))?;
        let logprobs = wire
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.logprobs)
            .ok_or_else(|| LlmError::Capability("response carries no logprobs".into()))?;
        isolate_continuation(&logprobs, context.chars().count())
    }
}

/// Sums logprobs of the tokens at or after character offset `context_chars`.
fn isolate_continuation(lp: &LogprobsWire, context_chars: usize) -> Result<ScoredContinuation, LlmError> {
    if lp.tokens.len() != lp.token_logprobs.len() || lp.tokens.len() != lp.text_offset.len() {
        return Err(LlmError::Alignment("logprob arrays differ in length".into()));
    }
    let mut loglikelihood = 0.0;
    let mut token_count = 0;
    let mut is_greedy = true;
    for (i, tok) in lp.tokens.iter().enumerate() {
        let start = lp.text_offset[i];
        let end = start + tok.chars().count();
        if start < context_chars {
            if end > context_chars {
                return Err(LlmError::Alignment(format!(
                    "token {i} ({tok:?}) spans the context/continuation boundary"
                )));
            }
            continue;
        }
        // the first prompt token has no conditional logprob
        let Some(value) = lp.token_logprobs[i] else {
            continue;
        };
        loglikelihood += value;
        token_count += 1;
        let top = lp
            .top_logprobs
            .as_ref()
            .and_then(|t| t.get(i))
            .and_then(|t| t.as_ref());
        is_greedy &= match top {
            Some(top) => top.values().all(|&other| value >= other),
            None => false,
        };
    }
    if token_count == 0 {
        return Err(LlmError::Alignment("no scored continuation tokens".into()));
    }
    Ok(ScoredContinuation {
        loglikelihood,
        token_count,
        is_greedy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wire(tokens: &[&str], lps: &[Option<f64>]) -> LogprobsWire {
        let mut offset = 0;
        let mut offsets = Vec::new();
        for t in tokens {
            offsets.push(offset);
            offset += t.chars().count();
        }
        LogprobsWire {
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            token_logprobs: lps.to_vec(),
            text_offset: offsets,
            top_logprobs: None,
        }
    }

    #[test]
    fn isolates_tokens_after_context() {
        let lp = wire(&["Q", ":", " yes", " no"], &[None, Some(-1.0), Some(-0.5), Some(-0.25)]);
        let s = isolate_continuation(&lp, 2).unwrap();
        assert_eq!(s.token_count, 2);
        assert!((s.loglikelihood + 0.75).abs() < 1e-12);
        assert!(!s.is_greedy);
    }

    #[test]
    fn straddling_token_is_alignment_error() {
        let lp = wire(&["Qu", "estion"], &[None, Some(-1.0)]);
        assert!(matches!(
            isolate_continuation(&lp, 3),
            Err(LlmError::Alignment(_))
        ));
    }
}
