use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::distill::{Dataset, PoSample, SftSample};
use crate::llm::{map_bounded, ChatMessage, Client, LlmError};
use crate::trainplan::{render_chat_template, CHAT_TEMPLATE_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerplexityFormat {
    Messages,
    Chosen,
    Rejected,
}

impl fmt::Display for PerplexityFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PerplexityFormat::Messages => "messages",
            PerplexityFormat::Chosen => "chosen",
            PerplexityFormat::Rejected => "rejected",
        })
    }
}

impl FromStr for PerplexityFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "messages" => Ok(Self::Messages),
            "chosen" => Ok(Self::Chosen),
            "rejected" => Ok(Self::Rejected),
            other => Err(format!("unknown format {other:?} (messages|chosen|rejected)")),
        }
    }
}

/// Which part of each rendered sample is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerplexityScope {
    /// The whole rendered conversation, prompt tokens included.
    #[default]
    FullText,
    /// Only the final assistant turn, conditioned on everything before it.
    CompletionOnly,
}

impl FromStr for PerplexityScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" | "full_text" => Ok(Self::FullText),
            "completion" | "completion_only" => Ok(Self::CompletionOnly),
            other => Err(format!("unknown scope {other:?} (full|completion)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub dataset_id: String,
    pub format: PerplexityFormat,
    pub model_id: String,
    pub chat_template_id: String,
    pub scope: PerplexityScope,
    pub mean_ppl: f64,
    /// One entry per input sample; `None` where scoring failed.
    pub per_sample_ppl: Vec<Option<f64>>,
    pub scored_token_total: u64,
    pub scored_samples: usize,
    pub failures: Vec<SampleFailure>,
}

pub fn sft_conversations(dataset: &Dataset<SftSample>) -> Vec<Vec<ChatMessage>> {
    dataset.samples.iter().map(|s| s.messages.clone()).collect()
}

pub fn po_conversations(dataset: &Dataset<PoSample>, format: PerplexityFormat) -> Vec<Vec<ChatMessage>> {
    dataset
        .samples
        .iter()
        .map(|s| match format {
            PerplexityFormat::Rejected => s.rejected.clone(),
            _ => s.chosen.clone(),
        })
        .collect()
}

fn split_for_scope(messages: &[ChatMessage], scope: PerplexityScope) -> Result<(String, String), String> {
    let rendered = render_chat_template(messages).map_err(|e| e.to_string())?;
    match scope {
        PerplexityScope::FullText => Ok((String::new(), rendered)),
        PerplexityScope::CompletionOnly => {
            let last = messages.last().ok_or("empty conversation")?;
            let tail = format!("{}</s>\n", last.content);
            let cut = rendered
                .len()
                .checked_sub(tail.len())
                .filter(|&c| rendered[c..] == tail)
                .ok_or("rendered text does not end with the final message")?;
            Ok((rendered[..cut].to_owned(), tail))
        }
    }
}

/// Perplexity of each rendered conversation under the client's scoring
/// model, plus the token-weighted dataset mean.
pub fn dataset_perplexity(
    client: &Client,
    dataset_id: &str,
    format: PerplexityFormat,
    conversations: &[Vec<ChatMessage>],
    scope: PerplexityScope,
) -> Result<PerplexityReport, MetricError> {
    if conversations.is_empty() {
        return Err(MetricError::Invalid("dataset is empty".into()));
    }
    let results = map_bounded(conversations, client.config().max_parallel, |msgs| {
        let (ctx, cont) = split_for_scope(msgs, scope).map_err(LlmError::Request)?;
        client.score_continuation(&ctx, &cont)
    });

    let mut per_sample_ppl = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    let mut scored: Vec<(f64, usize)> = Vec::new();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) if s.token_count > 0 && s.loglikelihood.is_finite() => {
                per_sample_ppl.push(Some((-s.loglikelihood / s.token_count as f64).exp()));
                scored.push((s.loglikelihood, s.token_count));
            }
            Ok(s) => {
                per_sample_ppl.push(None);
                failures.push(SampleFailure {
                    index,
                    error: format!(
                        "unusable score (loglikelihood {}, {} tokens)",
                        s.loglikelihood, s.token_count
                    ),
                });
            }
            Err(e @ LlmError::Capability(_)) => return Err(e.into()),
            Err(e) => {
                log::warn!("sample {index}: scoring failed: {e}");
                per_sample_ppl.push(None);
                failures.push(SampleFailure {
                    index,
                    error: e.to_string(),
                });
            }
        }
    }
    if scored.is_empty() {
        return Err(MetricError::AllFailed(conversations.len()));
    }
    // Summing in a canonical order keeps the mean independent of sample order.
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let ll: f64 = scored.iter().map(|s| s.0).sum();
    let tokens: u64 = scored.iter().map(|s| s.1 as u64).sum();
    Ok(PerplexityReport {
        dataset_id: dataset_id.to_owned(),
        format,
        model_id: client.config().model_id.clone(),
        chat_template_id: CHAT_TEMPLATE_ID.to_owned(),
        scope,
        mean_ppl: (-ll / tokens as f64).exp(),
        per_sample_ppl,
        scored_token_total: tokens,
        scored_samples: scored.len(),
        failures,
    })
}
