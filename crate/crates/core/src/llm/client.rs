use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use log::{debug, warn};
use rand::Rng;

use super::{ChatRequest, ChatResponse, EndpointConfig, LlmError, ScoredContinuation};

/// A single-attempt transport. Retries, validation and batching live in
/// [`Client`]; backends only classify failures.
pub trait Backend: Send + Sync {
    fn chat(&self, cfg: &EndpointConfig, req: &ChatRequest) -> Result<ChatResponse, LlmError>;

    fn score(
        &self,
        cfg: &EndpointConfig,
        context: &str,
        continuation: &str,
    ) -> Result<ScoredContinuation, LlmError>;
}

#[derive(Clone)]
pub struct Client {
    cfg: EndpointConfig,
    backend: Arc<dyn Backend>,
}

impl std::fmt::Debug for Client {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Client").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl Client {
    pub fn new(cfg: EndpointConfig, backend: Arc<dyn Backend>) -> Result<Self, LlmError> {
        cfg.validate()?;
        Ok(Self { cfg, backend })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    pub fn chat_complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let started = Instant::now();
        let (mut resp, retries) = self.with_retries("chat", || self.backend.chat(&self.cfg, req))?;
        resp.retry_count = retries;
        resp.latency_ms = started.elapsed().as_millis() as u64;
        Ok(resp)
    }

    pub fn score_continuation(
        &self,
        context: &str,
        continuation: &str,
    ) -> Result<ScoredContinuation, LlmError> {
        if continuation.is_empty() {
            return Err(LlmError::Request("continuation must be non-empty".into()));
        }
        if !self.cfg.supports_logprobs {
            return Err(LlmError::Capability(format!(
                "endpoint {} (model {}) is configured without logprob support",
                self.cfg.base_url, self.cfg.model_id
            )));
        }
        self.with_retries("score", || {
            self.backend.score(&self.cfg, context, continuation)
        })
        .map(|(scored, _)| scored)
    }

    /// Chat requests with at most `max_parallel` in flight; results in input order.
    pub fn run_batch(&self, requests: &[ChatRequest]) -> Vec<Result<ChatResponse, LlmError>> {
        map_bounded(requests, self.cfg.max_parallel, |req| self.chat_complete(req))
    }

    fn with_retries<T>(
        &self,
        what: &str,
        mut call: impl FnMut() -> Result<T, LlmError>,
    ) -> Result<(T, u32), LlmError> {
        let mut attempt = 0u32;
        loop {
            match call() {
                Ok(value) => return Ok((value, attempt)),
                Err(LlmError::Transient(message)) => {
                    if attempt >= self.cfg.max_retries {
                        return Err(LlmError::Transport {
                            attempts: attempt + 1,
                            message,
                        });
                    }
                    let cap = self.cfg.backoff_cap(attempt);
                    let sleep = if cap.is_zero() {
                        cap
                    } else {
                        cap.mul_f64(rand::rng().random::<f64>())
                    };
                    warn!(
                        "{what} attempt {} failed ({message}); retrying in {sleep:?}",
                        attempt + 1
                    );
                    std::thread::sleep(sleep);
                    attempt += 1;
                }
                Err(other) => {
                    debug!("{what} failed without retry: {other}");
                    return Err(other);
                }
            }
        }
    }
}

/// Applies `f` to every item with at most `max_parallel` concurrent calls.
/// The output vector is index-aligned with `items` whatever the completion order.
pub fn map_bounded<T, R, F>(items: &[T], max_parallel: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = max_parallel.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let out = f(&items[i]);
                *slots[i].lock().expect("slot lock") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every slot filled"))
        .collect()
}
