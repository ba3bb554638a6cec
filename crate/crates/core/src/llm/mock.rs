//! Deterministic in-process backend driven by fixtures.
//!
//! Chat fixtures map a request's prompt digest (or a substring of its last
//! user message) to a canned reply. Scoring uses a context-free per-token
//! model: each token's logprob comes from [`TokenTable`], with optional
//! whole-continuation overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize};

use super::{
    Backend, ChatRequest, ChatResponse, EndpointConfig, FinishReason, LlmError,
    ScoredContinuation, Usage,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockMatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    /// Substring of the final user message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
}

impl MockMatch {
    fn matches(&self, digest: &str, req: &ChatRequest) -> bool {
        if let Some(d) = &self.digest {
            if d != digest {
                return false;
            }
        }
        if let Some(needle) = &self.contains {
            let last_user = req
                .messages
                .iter()
                .rev()
                .find(|m| m.role == super::Role::User)
                .map(|m| m.content.as_str())
                .unwrap_or("");
            if !last_user.contains(needle.as_str()) {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockReply {
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refusal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<String>,
    /// HTTP-style statuses returned, in order, before the reply succeeds.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fail_first: Vec<u16>,
    /// Status returned on every call; the fixture never succeeds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
}

impl MockReply {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            ..Default::default()
        }
    }

    pub fn refusal(reason: impl Into<String>) -> Self {
        Self {
            refusal: Some(reason.into()),
            ..Default::default()
        }
    }

    pub fn failing_always(status: u16) -> Self {
        Self {
            status: Some(status),
            ..Default::default()
        }
    }

    pub fn failing_first(mut self, statuses: Vec<u16>) -> Self {
        self.fail_first = statuses;
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureLine {
    #[serde(rename = "match")]
    pub matcher: MockMatch,
    pub response: MockReply,
}

/// Whole-continuation score override, optionally restricted to one context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    pub continuation: String,
    #[serde(deserialize_with = "de_logprob")]
    pub loglikelihood: f64,
    #[serde(default)]
    pub greedy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenTable {
    #[serde(deserialize_with = "de_logprob")]
    pub default_logprob: f64,
    /// Logprob per token, keyed by token text without leading whitespace.
    pub tokens: BTreeMap<String, f64>,
    pub continuations: Vec<ContinuationOverride>,
    pub supports_logprobs: bool,
}

impl Default for TokenTable {
    fn default() -> Self {
        Self {
            default_logprob: 0.5f64.ln(),
            tokens: BTreeMap::new(),
            continuations: Vec::new(),
            supports_logprobs: true,
        }
    }
}

impl TokenTable {
    pub fn constant(logprob: f64) -> Self {
        Self {
            default_logprob: logprob,
            ..Default::default()
        }
    }

    pub fn with_override(
        mut self,
        context: Option<&str>,
        continuation: &str,
        loglikelihood: f64,
    ) -> Self {
        self.continuations.push(ContinuationOverride {
            context: context.map(str::to_owned),
            continuation: continuation.to_owned(),
            loglikelihood,
            greedy: false,
        });
        self
    }

    fn logprob(&self, token: &str) -> f64 {
        self.tokens
            .get(token.trim_start())
            .copied()
            .unwrap_or(self.default_logprob)
    }

    fn top_logprob(&self) -> f64 {
        self.tokens
            .values()
            .copied()
            .fold(self.default_logprob, f64::max)
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path)
            .map_err(|e| LlmError::Request(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| LlmError::Request(format!("bad logprob table {}: {e}", path.display())))
    }
}

fn de_logprob<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
        Raw::Text(s) => Err(serde::de::Error::custom(format!("bad logprob {s:?}"))),
    }
}

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\s*[\p{L}\p{N}_]+|\s*[^\s\p{L}\p{N}_]|\s+").expect("valid"))
}

/// Word-level tokens with leading whitespace attached. Concatenating the
/// tokens reproduces the input exactly.
pub fn mock_tokenize(text: &str) -> Vec<&str> {
    token_regex().find_iter(text).map(|m| m.as_str()).collect()
}

struct Fixture {
    matcher: MockMatch,
    reply: MockReply,
    served: AtomicU64,
}

pub struct MockBackend {
    fixtures: Mutex<Vec<Fixture>>,
    table: TokenTable,
    max_latency_ms: u64,
    calls: AtomicU64,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl MockBackend {
    pub fn new() -> Self {
        Self::with_table(TokenTable::default())
    }

    pub fn with_table(table: TokenTable) -> Self {
        Self {
            fixtures: Mutex::new(Vec::new()),
            table,
            max_latency_ms: 0,
            calls: AtomicU64::new(0),
        }
    }

    /// Adds a per-request sleep derived from the request digest, so
    /// completion order differs from submission order but stays reproducible.
    pub fn with_latency(mut self, max_ms: u64) -> Self {
        self.max_latency_ms = max_ms;
        self
    }

    pub fn add_reply(&self, digest: &str, reply: MockReply) {
        self.add_fixture(
            MockMatch {
                digest: Some(digest.to_owned()),
                contains: None,
            },
            reply,
        );
    }

    pub fn add_fixture(&self, matcher: MockMatch, reply: MockReply) {
        self.fixtures.lock().expect("fixtures lock").push(Fixture {
            matcher,
            reply,
            served: AtomicU64::new(0),
        });
    }

    /// Loads a JSONL fixture file of `{"match": {...}, "response": {...}}` lines.
    pub fn load_fixtures(&self, path: &Path) -> Result<usize, LlmError> {
        let text = fs::read_to_string(path)
            .map_err(|e| LlmError::Request(format!("cannot read {}: {e}", path.display())))?;
        let mut n = 0;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fx: FixtureLine = serde_json::from_str(line).map_err(|e| {
                LlmError::Request(format!("bad fixture {}:{}: {e}", path.display(), i + 1))
            })?;
            self.add_fixture(fx.matcher, fx.response);
            n += 1;
        }
        Ok(n)
    }

    /// Total backend invocations (chat and score), including failed attempts.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    fn simulate_latency(&self, key: &str) {
        if self.max_latency_ms > 0 {
            let h = key.bytes().fold(0u64, |a, b| a.wrapping_mul(31).wrapping_add(b as u64));
            std::thread::sleep(Duration::from_millis(h % (self.max_latency_ms + 1)));
        }
    }
}

fn status_error(status: u16) -> LlmError {
    match status {
        408 | 429 | 500..=599 => LlmError::Transient(format!("mock status {status}")),
        _ => LlmError::Request(format!("mock status {status}")),
    }
}

impl Backend for MockBackend {
    fn chat(&self, _cfg: &EndpointConfig, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let digest = req.digest();
        self.simulate_latency(&digest);
        let fixtures = self.fixtures.lock().expect("fixtures lock");
        let fixture = fixtures
            .iter()
            .find(|f| f.matcher.matches(&digest, req))
            .ok_or_else(|| LlmError::Request(format!("no mock fixture for digest {digest}")))?;
        let served = fixture.served.fetch_add(1, Ordering::SeqCst) as usize;
        if let Some(&status) = fixture.reply.fail_first.get(served) {
            return Err(status_error(status));
        }
        let reply = &fixture.reply;
        if let Some(status) = reply.status {
            return Err(status_error(status));
        }
        if let Some(reason) = &reply.refusal {
            return Err(LlmError::Refusal(reason.clone()));
        }
        let finish_reason = FinishReason::from_wire(reply.finish_reason.as_deref());
        if finish_reason == FinishReason::ContentFilter {
            return Err(LlmError::Refusal("content filter".into()));
        }
        let prompt_tokens = req
            .wire_messages()
            .iter()
            .map(|m| mock_tokenize(&m.content).len() as u64)
            .sum();
        Ok(ChatResponse {
            text: reply.text.clone(),
            finish_reason,
            usage: Usage {
                prompt_tokens,
                completion_tokens: mock_tokenize(&reply.text).len() as u64,
            },
            latency_ms: 0,
            retry_count: 0,
        })
    }

    fn score(
        &self,
        _cfg: &EndpointConfig,
        context: &str,
        continuation: &str,
    ) -> Result<ScoredContinuation, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.simulate_latency(continuation);
        if !self.table.supports_logprobs {
            return Err(LlmError::Capability(
                "mock endpoint configured without logprobs".into(),
            ));
        }
        let tokens = mock_tokenize(continuation);
        if tokens.is_empty() {
            return Err(LlmError::Alignment("continuation has no tokens".into()));
        }
        let overridden = self.table.continuations.iter().find(|o| {
            o.continuation == continuation && o.context.as_deref().is_none_or(|c| c == context)
        });
        if let Some(o) = overridden {
            return Ok(ScoredContinuation {
                loglikelihood: o.loglikelihood,
                token_count: tokens.len(),
                is_greedy: o.greedy,
            });
        }
        let top = self.table.top_logprob();
        let mut loglikelihood = 0.0;
        let mut is_greedy = true;
        for tok in &tokens {
            let lp = self.table.logprob(tok);
            loglikelihood += lp;
            is_greedy &= lp >= top;
        }
        Ok(ScoredContinuation {
            loglikelihood,
            token_count: tokens.len(),
            is_greedy,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::Client;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn client(mock: MockBackend) -> Client {
        let cfg = EndpointConfig {
            model_id: "mock".into(),
            backoff_base_ms: 0,
            ..Default::default()
        };
        Client::new(cfg, Arc::new(mock)).unwrap()
    }

    #[test]
    fn tokenizer_roundtrips() {
        let text = "  Hello, world!  It's 42.\n";
        let toks = mock_tokenize(text);
        assert_eq!(toks.concat(), text);
        assert_eq!(toks[0], "  Hello");
        assert_eq!(toks[1], ",");
    }

    #[test]
    fn fixture_text_verbatim() {
        let mock = MockBackend::new();
        let req = ChatRequest::user("What is up?");
        mock.add_reply(&req.digest(), MockReply::text("Question: A?\nAnswer: B."));
        let resp = client(mock).chat_complete(&req).unwrap();
        assert_eq!(resp.text, "Question: A?\nAnswer: B.");
        assert_eq!(resp.finish_reason, FinishReason::Stop);
    }

    #[test]
    fn contains_matcher_and_refusal() {
        let mock = MockBackend::new();
        mock.add_fixture(
            MockMatch {
                digest: None,
                contains: Some("forbidden".into()),
            },
            MockReply::refusal("policy"),
        );
        let c = client(mock);
        assert!(matches!(
            c.chat_complete(&ChatRequest::user("a forbidden topic")),
            Err(LlmError::Refusal(_))
        ));
        assert!(matches!(
            c.chat_complete(&ChatRequest::user("other")),
            Err(LlmError::Request(_))
        ));
    }

    #[test]
    fn constant_half_logprob() {
        let c = client(MockBackend::new());
        let s = c.score_continuation("ctx", " a b c").unwrap();
        assert_eq!(s.token_count, 3);
        assert!((s.loglikelihood - (-2.0794415416798357)).abs() < 1e-12);
        assert!((s.loglikelihood - 3.0 * 0.5f64.ln()).abs() < 1e-12);
        assert!(s.is_greedy);
    }

    #[test]
    fn greedy_requires_top_tokens() {
        let mut table = TokenTable::constant(-3.0);
        table.tokens.insert("yes".into(), -0.1);
        let c = client(MockBackend::with_table(table));
        assert!(c.score_continuation("", " yes yes").unwrap().is_greedy);
        assert!(!c.score_continuation("", " yes no").unwrap().is_greedy);
    }

    #[test]
    fn capability_error_without_logprobs() {
        let table = TokenTable {
            supports_logprobs: false,
            ..Default::default()
        };
        let c = client(MockBackend::with_table(table));
        assert!(matches!(
            c.score_continuation("c", " x"),
            Err(LlmError::Capability(_))
        ));
    }

    #[test]
    fn table_parses_neg_inf() {
        let t: TokenTable = serde_json::from_str(
            r#"{"default_logprob": -1.0, "continuations": [{"continuation": " no", "loglikelihood": "-inf"}]}"#,
        )
        .unwrap();
        assert_eq!(t.continuations[0].loglikelihood, f64::NEG_INFINITY);
        assert!(t.supports_logprobs);
    }

    proptest! {
        #[test]
        fn loglikelihood_is_additive(
            a in proptest::collection::vec("[a-e]{1,3}", 1..6),
            b in proptest::collection::vec("[a-e]{1,3}", 1..6),
            lps in proptest::collection::vec(-5.0f64..0.0, 5),
        ) {
            let mut table = TokenTable::constant(-0.7);
            for (i, lp) in lps.iter().enumerate() {
                table.tokens.insert(((b'a' + i as u8) as char).to_string(), *lp);
            }
            let c = client(MockBackend::with_table(table));
            let a: String = a.iter().map(|w| format!(" {w}")).collect();
            let b: String = b.iter().map(|w| format!(" {w}")).collect();
            let ctx = "Question: x\nAnswer:";
            let whole = c.score_continuation(ctx, &format!("{a}{b}")).unwrap();
            let first = c.score_continuation(ctx, &a).unwrap();
            let second = c.score_continuation(&format!("{ctx}{a}"), &b).unwrap();
            prop_assert!((whole.loglikelihood - (first.loglikelihood + second.loglikelihood)).abs() < 1e-9);
            prop_assert_eq!(whole.token_count, first.token_count + second.token_count);
            prop_assert!(whole.loglikelihood <= 0.0);
        }
    }
}
