use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, DatasetKind, DatasetManifest, PoSample, Sample, SampleMeta, SftSample, SkipRecord};
use super::parse::{parse_qa_response, ParseRule};
use super::principles::{ExemplarPair, PrinciplesDoc};
use super::prompts::{render_po_prompt, render_sft_prompt, Polarity, PromptSet};
use super::DistillError;
use crate::corpus::CorpusStore;
use crate::llm::{ChatMessage, ChatRequest, Client};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationOptions {
    pub temperature: f64,
    pub seed: u64,
    pub samples_per_document: usize,
    pub max_tokens: u32,
    /// Recorded in sample metadata when set; left out otherwise so that
    /// reruns are byte-identical.
    pub timestamp: Option<String>,
    /// Abort when more than this fraction of requests fail.
    pub max_failure_ratio: f64,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            seed: 0,
            samples_per_document: 1,
            max_tokens: 2048,
            timestamp: None,
            max_failure_ratio: 0.5,
        }
    }
}

/// One planned generation call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannedRequest {
    pub source_doc_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub polarity: Option<Polarity>,
    pub request: ChatRequest,
}

fn request(prompt: String, opts: &GenerationOptions, seed: u64) -> ChatRequest {
    ChatRequest {
        system_instruction: None,
        messages: vec![ChatMessage::user(prompt)],
        temperature: opts.temperature,
        max_tokens: opts.max_tokens,
        stop: Vec::new(),
        seed: Some(seed),
    }
}

/// The generation calls `generate_sft_dataset` would make, in order.
pub fn plan_sft_requests(
    corpus: &CorpusStore,
    prompts: &PromptSet,
    opts: &GenerationOptions,
) -> Result<Vec<PlannedRequest>, DistillError> {
    let mut out = Vec::with_capacity(corpus.len() * opts.samples_per_document);
    for doc in corpus.documents() {
        let prompt = render_sft_prompt(prompts, doc)?;
        for k in 0..opts.samples_per_document {
            out.push(PlannedRequest {
                source_doc_id: doc.id.clone(),
                polarity: None,
                request: request(prompt.clone(), opts, opts.seed.wrapping_add(k as u64)),
            });
        }
    }
    Ok(out)
}

fn check_failure_budget(failed: usize, requested: usize, opts: &GenerationOptions, skips: &[SkipRecord]) -> Result<(), DistillError> {
    if requested > 0 && failed as f64 > opts.max_failure_ratio * requested as f64 {
        let sample: Vec<String> = skips.iter().take(3).map(|s| s.reason.clone()).collect();
        return Err(DistillError::TooManyFailures {
            failed,
            requested,
            examples: sample.join("; "),
        });
    }
    Ok(())
}

fn mentions_title(text: &str, title: &str) -> bool {
    !title.is_empty() && text.contains(title)
}

pub fn generate_sft_dataset(
    corpus: &CorpusStore,
    client: &Client,
    prompts: &PromptSet,
    opts: &GenerationOptions,
) -> Result<Dataset<SftSample>, DistillError> {
    if corpus.is_empty() {
        return Err(DistillError::Input("corpus is empty".into()));
    }
    let plan = plan_sft_requests(corpus, prompts, opts)?;
    let requests: Vec<ChatRequest> = plan.iter().map(|p| p.request.clone()).collect();
    info!("generating {} SFT samples", requests.len());
    let results = client.run_batch(&requests);

    let mut samples = Vec::new();
    let mut skips = Vec::new();
    for (planned, result) in plan.iter().zip(results) {
        let doc = corpus
            .get(&planned.source_doc_id)
            .expect("planned requests come from the corpus");
        let skip = |reason: String| SkipRecord {
            source_doc_id: Some(doc.id.clone()),
            reason,
        };
        let parsed = match result {
            Ok(resp) => parse_qa_response(&resp.text).map_err(|e| e.to_string()),
            Err(e) => Err(e.to_string()),
        };
        let parsed = match parsed {
            Ok(p) => p,
            Err(reason) => {
                warn!("skipping document {}: {reason}", doc.id);
                skips.push(skip(reason));
                continue;
            }
        };
        if mentions_title(&parsed.question, &doc.title) || mentions_title(&parsed.answer, &doc.title) {
            warn!("skipping document {}: output quotes the article title", doc.id);
            skips.push(skip("output references the source article title".into()));
            continue;
        }
        let sample = SftSample {
            messages: vec![
                ChatMessage::user(parsed.question),
                ChatMessage::assistant(parsed.answer),
            ],
            meta: SampleMeta {
                source_doc_id: Some(doc.id.clone()),
                model_id: Some(client.config().model_id.clone()),
                temperature: Some(opts.temperature),
                timestamp: opts.timestamp.clone(),
                prompt_digest: Some(planned.request.digest()),
                parse_rule: Some(
                    match parsed.rule {
                        ParseRule::Labelled => "labelled",
                        ParseRule::Interrogative => "interrogative",
                    }
                    .into(),
                ),
            },
        };
        if let Err(reason) = sample.check_shape() {
            skips.push(skip(reason));
            continue;
        }
        samples.push(sample);
    }
    check_failure_budget(skips.len(), plan.len(), opts, &skips)?;

    let manifest = DatasetManifest {
        kind: DatasetKind::Sft,
        sample_count: samples.len(),
        requested: plan.len(),
        skipped: skips.len(),
        skips,
        source_checksum: Some(corpus.checksum().to_owned()),
        prompts_digest: Some(prompts.digest()),
        prompts_version: Some(prompts.version.clone()),
        model_id: Some(client.config().model_id.clone()),
        seed: Some(opts.seed),
        temperature: Some(opts.temperature),
        samples_per_document: Some(opts.samples_per_document),
        subset: None,
        tool_version: crate::TOOL_VERSION.into(),
    };
    let ds = Dataset { samples, manifest };
    ds.validate()?;
    Ok(ds)
}

fn qa_of(sample: &SftSample, index: usize) -> Result<(&str, &str), DistillError> {
    match (sample.user_content(), sample.assistant_content()) {
        (Some(q), Some(a)) => Ok((q, a)),
        _ => Err(DistillError::Validation(format!(
            "SFT sample {index} lacks a user or assistant message"
        ))),
    }
}

/// Two calls per SFT sample: chosen then rejected.
pub fn plan_po_requests(
    sft: &Dataset<SftSample>,
    ex: &ExemplarPair,
    principles: &PrinciplesDoc,
    prompts: &PromptSet,
    opts: &GenerationOptions,
) -> Result<Vec<PlannedRequest>, DistillError> {
    ex.validate()?;
    let mut out = Vec::with_capacity(sft.len() * 2);
    for (i, sample) in sft.samples.iter().enumerate() {
        let (q, a) = qa_of(sample, i)?;
        for polarity in [Polarity::Chosen, Polarity::Rejected] {
            let prompt = render_po_prompt(prompts, q, a, ex, principles, polarity);
            out.push(PlannedRequest {
                source_doc_id: sample.meta.source_doc_id.clone().unwrap_or_default(),
                polarity: Some(polarity),
                request: request(prompt, opts, opts.seed),
            });
        }
    }
    Ok(out)
}

pub fn generate_po_dataset(
    sft: &Dataset<SftSample>,
    ex: &ExemplarPair,
    principles: &PrinciplesDoc,
    client: &Client,
    prompts: &PromptSet,
    opts: &GenerationOptions,
) -> Result<Dataset<PoSample>, DistillError> {
    if sft.is_empty() {
        return Err(DistillError::Input("SFT dataset is empty".into()));
    }
    let plan = plan_po_requests(sft, ex, principles, prompts, opts)?;
    let requests: Vec<ChatRequest> = plan.iter().map(|p| p.request.clone()).collect();
    info!("generating {} preference rewrites", requests.len());
    let results = client.run_batch(&requests);

    let mut samples = Vec::new();
    let mut skips = Vec::new();
    let mut failed_calls = 0;
    let mut results = results.into_iter();
    for (i, sample) in sft.samples.iter().enumerate() {
        let (question, _) = qa_of(sample, i)?;
        let chosen = results.next().expect("two results per sample");
        let rejected = results.next().expect("two results per sample");
        let skip = |reason: String| SkipRecord {
            source_doc_id: sample.meta.source_doc_id.clone(),
            reason,
        };
        let (chosen, rejected) = match (chosen, rejected) {
            (Ok(c), Ok(r)) => (c.text.trim().to_owned(), r.text.trim().to_owned()),
            (c, r) => {
                let reasons: Vec<String> = [("chosen", c.err()), ("rejected", r.err())]
                    .into_iter()
                    .filter_map(|(p, e)| e.map(|e| format!("{p}: {e}")))
                    .collect();
                failed_calls += reasons.len();
                skips.push(skip(reasons.join("; ")));
                continue;
            }
        };
        if chosen.is_empty() || rejected.is_empty() {
            skips.push(skip("empty rewrite".into()));
            continue;
        }
        if chosen == rejected {
            skips.push(skip("degenerate pair".into()));
            continue;
        }
        let meta = SampleMeta {
            source_doc_id: sample.meta.source_doc_id.clone(),
            model_id: Some(client.config().model_id.clone()),
            temperature: Some(opts.temperature),
            timestamp: opts.timestamp.clone(),
            prompt_digest: Some(plan[2 * i].request.digest()),
            parse_rule: None,
        };
        let po = PoSample::new(question, &chosen, &rejected, meta);
        if let Err(reason) = po.check_shape() {
            skips.push(skip(reason));
            continue;
        }
        samples.push(po);
    }
    // a sample is lost when either of its two calls fails
    check_failure_budget(skips.len(), sft.len(), opts, &skips)?;
    if failed_calls > 0 {
        warn!("{failed_calls} rewrite call(s) failed");
    }

    let manifest = DatasetManifest {
        kind: DatasetKind::Po,
        sample_count: samples.len(),
        requested: sft.len(),
        skipped: skips.len(),
        skips,
        source_checksum: Some(sft.content_checksum()),
        prompts_digest: Some(prompts.digest()),
        prompts_version: Some(prompts.version.clone()),
        model_id: Some(client.config().model_id.clone()),
        seed: Some(opts.seed),
        temperature: Some(opts.temperature),
        samples_per_document: None,
        subset: None,
        tool_version: crate::TOOL_VERSION.into(),
    };
    let ds = Dataset { samples, manifest };
    ds.validate()?;
    Ok(ds)
}
