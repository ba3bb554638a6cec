use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ica::SystemPromptId;
use super::scoring::{
    generation_request, outcome_from, score_multiple_choice, score_truthfulqa_mc2, GenerationOutcome,
    Mc2Outcome, McOutcome, DEFAULT_MAX_TOKENS, DEFAULT_STOP,
};
use super::task::{BenchmarkItem, TaskId};
use super::textmetrics::{truthfulqa_gen_accuracy, GenAccuracy};
use super::EvalError;
use crate::digest::sha256_hex;
use crate::llm::{map_bounded, Client, EndpointConfig, LlmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    LoglikelihoodMc,
    GenerateUntil,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::LoglikelihoodMc => "loglikelihood_mc",
            EvalMode::GenerateUntil => "generate_until",
        })
    }
}

impl FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "loglikelihood_mc" | "mc" | "loglikelihood" => Ok(EvalMode::LoglikelihoodMc),
            "generate_until" | "generate" => Ok(EvalMode::GenerateUntil),
            other => Err(format!("unknown mode {other:?} (loglikelihood_mc|generate_until)")),
        }
    }
}

/// Result families that are never compared with each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFamily {
    Mc,
    Ica,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub task_id: TaskId,
    pub mode: EvalMode,
    pub system_prompt_id: SystemPromptId,
    pub endpoint: EndpointConfig,
    #[serde(default)]
    pub limit: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_stop")]
    pub stop: Vec<String>,
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}

fn default_stop() -> Vec<String> {
    vec![DEFAULT_STOP.to_owned()]
}

impl EvalConfig {
    pub fn new(task_id: TaskId, mode: EvalMode, endpoint: EndpointConfig) -> Self {
        Self {
            task_id,
            mode,
            system_prompt_id: SystemPromptId::Baseline,
            endpoint,
            limit: None,
            seed: 0,
            max_tokens: DEFAULT_MAX_TOKENS,
            stop: default_stop(),
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        match self.mode {
            EvalMode::GenerateUntil => {
                if self.stop.iter().all(String::is_empty) || self.max_tokens == 0 {
                    return Err(EvalError::Config(
                        "generate_until needs a stop sequence and max_tokens > 0".into(),
                    ));
                }
            }
            EvalMode::LoglikelihoodMc => {
                if !self.endpoint.supports_logprobs {
                    return Err(EvalError::Config(format!(
                        "loglikelihood_mc needs an endpoint with logprob support; {} (model {}) has none, use generate_until",
                        self.endpoint.base_url, self.endpoint.model_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn family(&self) -> ReportFamily {
        match self.mode {
            EvalMode::LoglikelihoodMc => ReportFamily::Mc,
            EvalMode::GenerateUntil => ReportFamily::Ica,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Scored,
    Errored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub index: usize,
    pub id: String,
    #[serde(skip_serializing_if = "String::is_empty", default)]
    pub category: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gold: Option<usize>,
    pub status: ItemStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mc: Option<McOutcome>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mc2: Option<Mc2Outcome>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub generation: Option<GenerationOutcome>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gen_accuracy: Option<GenAccuracy>,
}

impl ItemRecord {
    fn new(index: usize, item: &BenchmarkItem) -> Self {
        Self {
            index,
            id: item.id.clone(),
            category: item.category.clone(),
            gold: item.gold_index(),
            status: ItemStatus::Scored,
            error: None,
            mc: None,
            mc2: None,
            generation: None,
            gen_accuracy: None,
        }
    }

    /// Whether this scored item counts as correct for accuracy.
    fn correct(&self) -> Option<bool> {
        if self.status != ItemStatus::Scored {
            return None;
        }
        if let Some(mc) = &self.mc {
            return Some(mc.correct);
        }
        match (&self.generation, self.gold) {
            (Some(g), Some(gold)) => Some(g.extraction.index == Some(gold)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub items_total: usize,
    pub items_scored: usize,
    pub items_errored: usize,
    /// Name of the headline metric for this task and mode.
    pub primary_metric: String,
    pub primary_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mc2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bleu_acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rouge1_acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub abstentions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub abstain_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub refusals: Option<usize>,
    /// Primary metric per category, where items carry one.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub by_category: BTreeMap<String, f64>,
}

impl Aggregates {
    /// Named numeric aggregates, in a fixed order.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        [
            ("accuracy", self.accuracy),
            ("accuracy_norm", self.accuracy_norm),
            ("mc2", self.mc2),
            ("bleu_acc", self.bleu_acc),
            ("rouge1_acc", self.rouge1_acc),
            ("abstain_rate", self.abstain_rate),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn frac(flags: impl Iterator<Item = bool>) -> Option<f64> {
    mean(flags.map(|b| if b { 1.0 } else { 0.0 }))
}

fn primary_of(task: TaskId, mode: EvalMode) -> &'static str {
    match (task, mode) {
        (TaskId::TruthfulqaMc2, EvalMode::LoglikelihoodMc) => "mc2",
        (TaskId::TruthfulqaMc2, EvalMode::GenerateUntil) => "bleu_acc",
        _ => "accuracy",
    }
}

fn primary_for(records: &[&ItemRecord], task: TaskId, mode: EvalMode) -> Option<f64> {
    let scored = || records.iter().filter(|r| r.status == ItemStatus::Scored);
    match primary_of(task, mode) {
        "mc2" => mean(scored().filter_map(|r| r.mc2.as_ref().map(|m| m.mc2))),
        "bleu_acc" => frac(scored().filter_map(|r| r.gen_accuracy.map(|g| g.bleu_acc))),
        _ => frac(scored().filter_map(|r| r.correct())),
    }
}

/// Aggregates from per-item records alone.
pub fn recompute_aggregates(records: &[ItemRecord], task: TaskId, mode: EvalMode) -> Aggregates {
    let scored: Vec<&ItemRecord> = records.iter().filter(|r| r.status == ItemStatus::Scored).collect();
    let all: Vec<&ItemRecord> = records.iter().collect();
    let mut agg = Aggregates {
        items_total: records.len(),
        items_scored: scored.len(),
        items_errored: records.len() - scored.len(),
        primary_metric: primary_of(task, mode).to_owned(),
        primary_value: primary_for(&all, task, mode),
        accuracy: None,
        accuracy_norm: None,
        mc2: None,
        bleu_acc: None,
        rouge1_acc: None,
        abstentions: None,
        abstain_rate: None,
        refusals: None,
        by_category: BTreeMap::new(),
    };
    match (task, mode) {
        (TaskId::TruthfulqaMc2, EvalMode::LoglikelihoodMc) => {
            agg.mc2 = mean(scored.iter().filter_map(|r| r.mc2.as_ref().map(|m| m.mc2)));
        }
        (_, EvalMode::LoglikelihoodMc) => {
            agg.accuracy = frac(scored.iter().filter_map(|r| r.mc.as_ref().map(|m| m.correct)));
            agg.accuracy_norm = frac(scored.iter().filter_map(|r| r.mc.as_ref().map(|m| m.correct_norm)));
        }
        (_, EvalMode::GenerateUntil) => {
            let gens: Vec<&GenerationOutcome> = scored.iter().filter_map(|r| r.generation.as_ref()).collect();
            let abstained = gens.iter().filter(|g| g.extraction.index.is_none()).count();
            agg.abstentions = Some(abstained);
            agg.abstain_rate = (!gens.is_empty()).then(|| abstained as f64 / gens.len() as f64);
            agg.refusals = Some(gens.iter().filter(|g| g.refused).count());
            if task == TaskId::TruthfulqaMc2 {
                agg.bleu_acc = frac(scored.iter().filter_map(|r| r.gen_accuracy.map(|g| g.bleu_acc)));
                agg.rouge1_acc = frac(scored.iter().filter_map(|r| r.gen_accuracy.map(|g| g.rouge1_acc)));
            } else {
                agg.accuracy = frac(scored.iter().filter_map(|r| r.correct()));
            }
        }
    }
    let mut cats: BTreeMap<&str, Vec<&ItemRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.category.is_empty()) {
        cats.entry(r.category.as_str()).or_default().push(r);
    }
    for (cat, rs) in cats {
        if let Some(v) = primary_for(&rs, task, mode) {
            agg.by_category.insert(cat.to_owned(), v);
        }
    }
    agg
}

/// Percent change against a positive baseline, rounded to two decimals.
pub fn relative_improvement(score: f64, baseline: f64) -> Result<f64, EvalError> {
    if !(baseline > 0.0) || !score.is_finite() {
        return Err(EvalError::Domain(baseline));
    }
    let pct = 100.0 * (score - baseline) / baseline;
    Ok((pct * 100.0).round() / 100.0 + 0.0)
}

pub fn format_percent(pct: f64) -> String {
    format!("{pct:.2}%")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineDelta {
    pub baseline: String,
    pub metric: String,
    pub baseline_value: f64,
    pub value: f64,
    pub relative_improvement_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportNotes {
    pub mc_context: String,
    pub accuracy_norm: String,
    pub bleu: String,
    pub abstentions: String,
}

impl Default for ReportNotes {
    fn default() -> Self {
        Self {
            mc_context: "Question: {question}\\nAnswer: scored with continuation \" {choice}\"".into(),
            accuracy_norm: "argmax of loglikelihood / choice byte length".into(),
            bleu: "sentence BLEU-4, add-one smoothing on 2..4-gram precisions, closest-reference brevity penalty".into(),
            abstentions: "scored as incorrect".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool_version: String,
    pub family: ReportFamily,
    pub config: EvalConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub system_prompt: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub system_prompt_digest: Option<String>,
    pub task_source: String,
    pub notes: ReportNotes,
    pub items: Vec<ItemRecord>,
    pub aggregates: Aggregates,
    #[serde(default)]
    pub baseline_deltas: Vec<BaselineDelta>,
}

impl EvalReport {
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("report serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, EvalError> {
        serde_json::from_slice(bytes).map_err(|e| EvalError::Input(format!("bad eval report: {e}")))
    }

    /// Flat CSV of the aggregate metrics.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,mode,system_prompt,model,metric,value\n");
        let mut row = |metric: &str, value: String| {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.config.task_id,
                self.config.mode,
                csv_field(&self.config.system_prompt_id.to_string()),
                csv_field(&self.config.endpoint.model_id),
                csv_field(metric),
                value
            ));
        };
        row("items_total", self.aggregates.items_total.to_string());
        row("items_scored", self.aggregates.items_scored.to_string());
        row("items_errored", self.aggregates.items_errored.to_string());
        for (k, v) in self.aggregates.metrics() {
            row(k, v.to_string());
        }
        for (cat, v) in &self.aggregates.by_category {
            row(&format!("{}:{cat}", self.aggregates.primary_metric), v.to_string());
        }
        for d in &self.baseline_deltas {
            row(&format!("{}_vs_{}_pct", d.metric, d.baseline), format!("{:.2}", d.relative_improvement_pct));
        }
        out
    }

    /// Relative improvement of every shared aggregate over `baseline`.
    pub fn compare_to(&mut self, baseline: &EvalReport, label: &str) -> Result<(), EvalError> {
        if baseline.family != self.family {
            return Err(EvalError::Incomparable(format!(
                "{:?} results cannot be compared with {:?} results",
                self.family, baseline.family
            )));
        }
        if baseline.config.task_id != self.config.task_id {
            return Err(EvalError::Incomparable(format!(
                "task {} vs baseline task {}",
                self.config.task_id, baseline.config.task_id
            )));
        }
        let base: BTreeMap<&str, f64> = baseline.aggregates.metrics().into_iter().collect();
        let mut deltas = Vec::new();
        for (metric, value) in self.aggregates.metrics() {
            if metric == "abstain_rate" {
                continue;
            }
            if let Some(&b) = base.get(metric) {
                match relative_improvement(value, b) {
                    Ok(pct) => deltas.push(BaselineDelta {
                        baseline: label.to_owned(),
                        metric: metric.to_owned(),
                        baseline_value: b,
                        value,
                        relative_improvement_pct: pct,
                    }),
                    Err(_) => log::warn!("baseline {metric} is {b}; relative improvement undefined"),
                }
            }
        }
        self.baseline_deltas = deltas;
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn errored(mut rec: ItemRecord, e: &LlmError) -> ItemRecord {
    rec.status = ItemStatus::Errored;
    rec.error = Some(e.to_string());
    rec
}

fn score_item(cfg: &EvalConfig, item: &BenchmarkItem, index: usize, client: &Client, system_prompt: &str) -> Result<ItemRecord, LlmError> {
    let mut rec = ItemRecord::new(index, item);
    let outcome: Result<(), LlmError> = match (cfg.mode, item.task_id) {
        (EvalMode::LoglikelihoodMc, TaskId::TruthfulqaMc2) => score_truthfulqa_mc2(item, client).map(|m| rec.mc2 = Some(m)),
        (EvalMode::LoglikelihoodMc, _) => score_multiple_choice(item, client).map(|m| rec.mc = Some(m)),
        (EvalMode::GenerateUntil, task) => {
            let with_choices = task != TaskId::TruthfulqaMc2;
            let mut req = generation_request(item, system_prompt, with_choices, cfg.max_tokens, &cfg.stop);
            req.seed = Some(cfg.seed);
            outcome_from(item, client.chat_complete(&req)).map(|g| {
                if task == TaskId::TruthfulqaMc2 {
                    let text = if g.refused { "" } else { g.generation.as_str() };
                    rec.gen_accuracy = truthfulqa_gen_accuracy(text, item);
                }
                rec.generation = Some(g);
            })
        }
    };
    match outcome {
        Ok(()) => Ok(rec),
        Err(e @ LlmError::Capability(_)) => Err(e),
        Err(e) => {
            log::warn!("item {}: {e}", item.id);
            Ok(errored(rec, &e))
        }
    }
}

/// Scores `items` under `cfg`. Capability errors abort; other item-level
/// failures are recorded and excluded from aggregates.
pub fn run_eval(
    cfg: &EvalConfig,
    items: &[BenchmarkItem],
    client: &Client,
    system_prompt: Option<&str>,
    task_source: &str,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    if let Some(bad) = items.iter().find(|i| i.task_id != cfg.task_id) {
        return Err(EvalError::Input(format!("item {} belongs to {}, not {}", bad.id, bad.task_id, cfg.task_id)));
    }
    let items = &items[..cfg.limit.map_or(items.len(), |l| l.min(items.len()))];
    let prompt = match cfg.mode {
        EvalMode::GenerateUntil => system_prompt,
        EvalMode::LoglikelihoodMc => None,
    };
    let indexed: Vec<(usize, &BenchmarkItem)> = items.iter().enumerate().collect();
    let records = map_bounded(&indexed, cfg.endpoint.max_parallel, |(i, item)| {
        score_item(cfg, item, *i, client, prompt.unwrap_or(""))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let aggregates = recompute_aggregates(&records, cfg.task_id, cfg.mode);
    Ok(EvalReport {
        tool_version: crate::TOOL_VERSION.to_owned(),
        family: cfg.family(),
        config: cfg.clone(),
        system_prompt: prompt.map(str::to_owned),
        system_prompt_digest: prompt.map(|p| sha256_hex(p.as_bytes())),
        task_source: task_source.to_owned(),
        notes: ReportNotes::default(),
        items: records,
        aggregates,
        baseline_deltas: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::evalkit::task::Gold;
    use crate::llm::mock::{ContinuationOverride, MockReply};
    use crate::llm::{MockBackend, TokenTable};

    #[test]
    fn relative_improvement_examples() {
        assert_eq!(relative_improvement(0.5, 0.5).unwrap(), 0.0);
        assert_eq!(relative_improvement(0.6175, 0.5).unwrap(), 23.5);
        assert_eq!(format_percent(relative_improvement(0.6175, 0.5).unwrap()), "23.50%");
        assert_eq!(relative_improvement(0.25, 0.5).unwrap(), -50.0);
        assert_eq!(format_percent(relative_improvement(0.75, 0.60).unwrap()), "25.00%");
        assert!(matches!(relative_improvement(0.5, 0.0), Err(EvalError::Domain(_))));
        assert!(relative_improvement(0.5, -1.0).is_err());
    }

    fn arc_items(n: usize) -> Vec<BenchmarkItem> {
        (0..n)
            .map(|i| BenchmarkItem {
                task_id: TaskId::ArcChallenge,
                id: format!("q{i}"),
                question: format!("Question {i}?"),
                choices: vec![format!("right{i}"), format!("wrong{i}")],
                gold: Gold::Index(0),
                category: if i % 2 == 0 { "even".into() } else { "odd".into() },
            })
            .collect()
    }

    fn scoring_client(items: &[BenchmarkItem], correct: usize) -> Client {
        let mut table = TokenTable::constant(-5.0);
        for (i, it) in items.iter().enumerate() {
            let winner = if i < correct { 0 } else { 1 };
            table.continuations.push(ContinuationOverride {
                context: None,
                continuation: format!(" {}", it.choices[winner]),
                loglikelihood: -0.1,
                greedy: true,
            });
        }
        Client::new(EndpointConfig::default(), Arc::new(MockBackend::with_table(table))).unwrap()
    }

    #[test]
    fn mc_run_and_audit() {
        let items = arc_items(8);
        let client = scoring_client(&items, 6);
        let cfg = EvalConfig::new(TaskId::ArcChallenge, EvalMode::LoglikelihoodMc, EndpointConfig::default());
        let r = run_eval(&cfg, &items, &client, None, "fixture").unwrap();
        assert_eq!(r.aggregates.accuracy, Some(0.75));
        assert_eq!(r.aggregates.primary_value, Some(0.75));
        assert_eq!(r.aggregates, recompute_aggregates(&r.items, cfg.task_id, cfg.mode));
        let again = run_eval(&cfg, &items, &client, None, "fixture").unwrap();
        assert_eq!(r.to_json(), again.to_json());
        let back = EvalReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert!(r.to_csv().contains("arc_challenge,loglikelihood_mc,baseline,gpt-4-turbo,accuracy,0.75\n"));
    }

    #[test]
    fn generate_mode_abstains_and_errors() {
        let items = arc_items(4);
        let cfg = EvalConfig::new(TaskId::ArcChallenge, EvalMode::GenerateUntil, EndpointConfig::default());
        let mock = MockBackend::new();
        let replies = [
            MockReply::text("The answer is (A)"),
            MockReply::text("(B)"),
            MockReply::refusal("cannot"),
            MockReply::failing_always(400),
        ];
        for (it, reply) in items.iter().zip(replies) {
            let mut req = generation_request(it, "sys", true, cfg.max_tokens, &cfg.stop);
            req.seed = Some(cfg.seed);
            mock.add_reply(&req.digest(), reply);
        }
        let client = Client::new(EndpointConfig::default(), Arc::new(mock)).unwrap();
        let r = run_eval(&cfg, &items, &client, Some("sys"), "fixture").unwrap();
        let a = &r.aggregates;
        assert_eq!((a.items_scored, a.items_errored), (3, 1));
        assert_eq!(a.accuracy, Some(1.0 / 3.0));
        assert_eq!((a.abstentions, a.refusals), (Some(1), Some(1)));
        assert_eq!(r.family, ReportFamily::Ica);
    }

    #[test]
    fn baseline_comparison_respects_families() {
        let items = arc_items(10);
        let cfg = EvalConfig::new(TaskId::ArcChallenge, EvalMode::LoglikelihoodMc, EndpointConfig::default());
        let base = run_eval(&cfg, &items, &scoring_client(&items, 6), None, "x").unwrap();
        let mut better = run_eval(&cfg, &items, &scoring_client(&items, 9), None, "x").unwrap();
        better.compare_to(&base, "baseline").unwrap();
        let d = &better.baseline_deltas[0];
        assert_eq!((d.metric.as_str(), d.relative_improvement_pct), ("accuracy", 50.0));
        let mut ica = base.clone();
        ica.family = ReportFamily::Ica;
        assert!(matches!(better.compare_to(&ica, "b"), Err(EvalError::Incomparable(_))));
    }

    #[test]
    fn config_validation() {
        let mut cfg = EvalConfig::new(TaskId::ArcChallenge, EvalMode::GenerateUntil, EndpointConfig::default());
        cfg.stop.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = EvalConfig::new(TaskId::ArcChallenge, EvalMode::LoglikelihoodMc, EndpointConfig::default());
        cfg.endpoint.supports_logprobs = false;
        assert!(cfg.validate().is_err());
    }
}
