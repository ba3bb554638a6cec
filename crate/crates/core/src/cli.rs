//! Command-line entry point.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::{ingest_documents, write_file, CorpusError, CorpusStore, InputFormat};
use crate::digest::sha256_hex;
use crate::distill::{
    detect_kind, generate_po_dataset, generate_sft_dataset, plan_po_requests, plan_sft_requests,
    sample_control_dataset, Dataset, DatasetKind, DistillError, ExemplarPair, GenerationOptions,
    PlannedRequest, PoSample, PrinciplesDoc, PromptSet, Sample, SftSample,
};
use crate::evalkit::{
    build_ica_prompt, generation_request, load_task, mc_context, mc_continuation, run_eval, BenchmarkItem,
    EvalConfig, EvalError, EvalMode, EvalReport, Gold, ReportFamily, SystemPromptId, TaskId, BASELINE_PROMPT,
};
use crate::llm::{Backend, Client, EndpointConfig, HttpBackend, LlmError, MockBackend, TokenTable};
use crate::metrics::{
    build_distribution, corpus_entropy_stats, dataset_perplexity, kl_divergence_with_alpha, mutual_information,
    po_conversations, sft_conversations, MetricError, MetricReport, PerplexityFormat, PerplexityScope, TokenUnit,
    KL_ALPHA,
};
use crate::trainplan::{emit_recipe, export_dataset, TrainError, TrainStage};

/// Share of requested samples that must be produced for `forge` to succeed.
pub const MIN_PRODUCED_RATIO: f64 = 0.9;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Endpoint(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Endpoint(_) => 3,
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        CliError::Endpoint(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DistillError> for CliError {
    fn from(e: DistillError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Llm(l) => l.into(),
            MetricError::AllFailed(_) => CliError::Endpoint(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Llm(l) => l.into(),
            EvalError::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "align-forge", version, about = "Synthetic alignment datasets, dataset metrics and benchmark evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub endpoint_url: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Serve chat calls from a JSONL fixture file instead of the network.
    #[arg(long, global = true, value_name = "FIXTURES")]
    pub mock: Option<PathBuf>,
    /// Serve scoring calls from a mock logprob table (JSON).
    #[arg(long, global = true, value_name = "TABLE")]
    pub mock_logprobs: Option<PathBuf>,
    /// Write the requests that would be sent and make no calls.
    #[arg(long, global = true)]
    pub dry_run: bool,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub max_parallel: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize and deduplicate a document corpus.
    Ingest(IngestArgs),
    /// Generate SFT or preference datasets.
    Forge {
        #[command(subcommand)]
        stage: ForgeStage,
    },
    /// Draw a seeded random subset of a dataset.
    SampleControl(SampleControlArgs),
    /// Dataset-quality metrics.
    Analyze {
        #[command(subcommand)]
        metric: AnalyzeCmd,
    },
    /// Score a benchmark.
    Eval(EvalArgs),
    /// Export a trainer-ready dataset and QLoRA recipe.
    ExportTrain {
        #[command(subcommand)]
        stage: ExportStage,
    },
    /// Summarize eval reports, optionally against a baseline.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    TextDir,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Corpus JSONL file or directory of text files.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ForgeStage {
    Sft(ForgeSftArgs),
    Po(ForgePoArgs),
}

#[derive(Debug, Args)]
pub struct ForgeSftArgs {
    /// Corpus store written by `ingest`.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub samples_per_document: Option<usize>,
    /// Recorded in sample metadata when given.
    #[arg(long)]
    pub timestamp: Option<String>,
}

#[derive(Debug, Args)]
pub struct ForgePoArgs {
    #[arg(long)]
    pub sft: Option<PathBuf>,
    #[arg(long)]
    pub principles: Option<PathBuf>,
    #[arg(long)]
    pub exemplars: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub timestamp: Option<String>,
}

#[derive(Debug, Args)]
pub struct SampleControlArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(short, long, default_value_t = 897)]
    pub n: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum UnitArg {
    Word,
    Char,
}

impl From<UnitArg> for TokenUnit {
    fn from(u: UnitArg) -> Self {
        match u {
            UnitArg::Word => TokenUnit::Word,
            UnitArg::Char => TokenUnit::Char,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PplFormatArg {
    Messages,
    Chosen,
    Rejected,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScopeArg {
    Full,
    Completion,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCmd {
    /// Per-document normalized Shannon entropy.
    Entropy {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "word")]
        unit: UnitArg,
    },
    /// Normalized mutual information between paired documents.
    Mi {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_enum, default_value = "word")]
        unit: UnitArg,
    },
    /// Smoothed KL divergence D(p || q) of pooled token distributions.
    Kl {
        #[arg(long)]
        p: PathBuf,
        #[arg(long)]
        q: PathBuf,
        #[arg(long, value_enum, default_value = "word")]
        unit: UnitArg,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Dataset perplexity under the scoring endpoint.
    Ppl {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "messages")]
        format: PplFormatArg,
        #[arg(long, value_enum, default_value = "full")]
        scope: ScopeArg,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    ArcChallenge,
    BbqLiteJson,
    TruthfulqaMc2,
}

impl From<TaskArg> for TaskId {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::ArcChallenge => TaskId::ArcChallenge,
            TaskArg::BbqLiteJson => TaskId::BbqLiteJson,
            TaskArg::TruthfulqaMc2 => TaskId::TruthfulqaMc2,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    LoglikelihoodMc,
    GenerateUntil,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub task: TaskArg,
    /// Task file or directory.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "loglikelihood-mc")]
    pub mode: ModeArg,
    /// baseline, ai_principles_v1, ai_principles_v2 or a custom id.
    #[arg(long, default_value = "baseline")]
    pub system_prompt: String,
    /// Prompt text for a custom system prompt id.
    #[arg(long)]
    pub system_prompt_file: Option<PathBuf>,
    /// JSON `{"question", "answer"}` appended by ai_principles_v2.
    #[arg(long)]
    pub exemplar: Option<PathBuf>,
    #[arg(long)]
    pub principles: Option<PathBuf>,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub baseline_report: Option<PathBuf>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Subcommand)]
pub enum ExportStage {
    Sft(ExportArgs),
    Orpo(ExportArgs),
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub base_model: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Eval report JSON files.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub baseline: Option<PathBuf>,
}

/// Declarative run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub endpoint: EndpointConfig,
    pub corpus_path: Option<PathBuf>,
    pub principles_path: Option<PathBuf>,
    pub exemplars_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub temperature: f64,
    pub max_tokens: u32,
    pub samples_per_document: usize,
    pub timestamp: Option<String>,
    pub base_model_id: String,
    pub mock_fixtures: Option<PathBuf>,
    pub mock_logprobs: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let gen = GenerationOptions::default();
        Self {
            endpoint: EndpointConfig::default(),
            corpus_path: None,
            principles_path: None,
            exemplars_path: None,
            output_dir: PathBuf::from("out"),
            seed: gen.seed,
            temperature: gen.temperature,
            max_tokens: gen.max_tokens,
            samples_per_document: gen.samples_per_document,
            timestamp: None,
            base_model_id: "meta-llama/Meta-Llama-3-8B".into(),
            mock_fixtures: None,
            mock_logprobs: None,
        }
    }
}

impl RunConfig {
    pub fn resolve(g: &GlobalArgs) -> Result<Self, CliError> {
        let mut cfg = match &g.config {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("bad config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = g.seed {
            cfg.seed = s;
        }
        if let Some(u) = &g.endpoint_url {
            cfg.endpoint.base_url = u.clone();
        }
        if let Some(m) = &g.model {
            cfg.endpoint.model_id = m.clone();
        }
        if let Some(p) = &g.mock {
            cfg.mock_fixtures = Some(p.clone());
        }
        if let Some(p) = &g.mock_logprobs {
            cfg.mock_logprobs = Some(p.clone());
        }
        if let Some(d) = &g.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(n) = g.max_parallel {
            cfg.endpoint.max_parallel = n;
        }
        cfg.endpoint.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if !(cfg.temperature >= 0.0) {
            return Err(CliError::Usage(format!("temperature must be >= 0, got {}", cfg.temperature)));
        }
        Ok(cfg)
    }

    fn is_mock(&self) -> bool {
        self.mock_fixtures.is_some() || self.mock_logprobs.is_some()
    }

    pub fn client(&self) -> Result<Client, CliError> {
        let mut endpoint = self.endpoint.clone();
        let backend: Arc<dyn Backend> = if self.is_mock() {
            let table = match &self.mock_logprobs {
                Some(p) => TokenTable::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
                None => TokenTable::default(),
            };
            endpoint.supports_logprobs &= table.supports_logprobs;
            let mock = MockBackend::with_table(table);
            if let Some(p) = &self.mock_fixtures {
                mock.load_fixtures(p).map_err(|e| CliError::Usage(e.to_string()))?;
            }
            Arc::new(mock)
        } else {
            Arc::new(HttpBackend::new(&endpoint).map_err(|e| CliError::Usage(e.to_string()))?)
        };
        Client::new(endpoint, backend).map_err(|e| CliError::Usage(e.to_string()))
    }

    fn generation_options(&self, temperature: Option<f64>, timestamp: Option<String>) -> GenerationOptions {
        GenerationOptions {
            temperature: temperature.unwrap_or(self.temperature),
            seed: self.seed,
            samples_per_document: self.samples_per_document,
            max_tokens: self.max_tokens,
            timestamp: timestamp.or_else(|| self.timestamp.clone()),
            ..GenerationOptions::default()
        }
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.output_dir.join(rel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

/// Record of one subcommand run: enough to reproduce every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub dry_run: bool,
    pub endpoint: Value,
    pub inputs: Vec<FileRef>,
    pub outputs: Vec<FileRef>,
    pub params: Value,
}

fn file_ref(path: &Path) -> Result<FileRef, CliError> {
    let sha256 = if path.is_dir() {
        dir_digest(path)?
    } else {
        let bytes = fs::read(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        sha256_hex(&bytes)
    };
    Ok(FileRef {
        path: path.display().to_string(),
        sha256,
    })
}

fn dir_digest(dir: &Path) -> Result<String, CliError> {
    fn walk(dir: &Path, base: &Path, out: &mut Vec<(String, String)>) -> std::io::Result<()> {
        let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.path());
        for e in entries {
            let p = e.path();
            if p.is_dir() {
                walk(&p, base, out)?;
            } else {
                let rel = p.strip_prefix(base).unwrap_or(&p).display().to_string();
                out.push((rel, sha256_hex(&fs::read(&p)?)));
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(dir, dir, &mut files).map_err(|e| CliError::Data(format!("cannot read {}: {e}", dir.display())))?;
    Ok(crate::digest::sha256_parts(files.iter().flat_map(|(a, b)| [a.as_str(), b.as_str()])))
}

struct Run<'a> {
    cfg: &'a RunConfig,
    dry_run: bool,
    command: String,
    inputs: Vec<FileRef>,
    outputs: Vec<FileRef>,
    params: Value,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a RunConfig, dry_run: bool, command: &str) -> Self {
        Self {
            cfg,
            dry_run,
            command: command.to_owned(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            params: json!({}),
        }
    }

    fn input(&mut self, path: &Path) -> Result<(), CliError> {
        if !path.exists() {
            return Err(CliError::Data(format!("input {} does not exist", path.display())));
        }
        self.inputs.push(file_ref(path)?);
        Ok(())
    }

    fn output(&mut self, path: &Path) -> Result<(), CliError> {
        self.outputs.push(file_ref(path)?);
        Ok(())
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        write_file(path, bytes)?;
        self.output(path)
    }

    fn finish(self) -> Result<PathBuf, CliError> {
        let endpoint = json!({
            "base_url": self.cfg.endpoint.base_url,
            "model_id": self.cfg.endpoint.model_id,
            "api_key_env": self.cfg.endpoint.api_key_ref,
            "mock": self.cfg.is_mock(),
        });
        let manifest = RunManifest {
            command: self.command.clone(),
            tool_version: crate::TOOL_VERSION.to_owned(),
            seed: self.cfg.seed,
            dry_run: self.dry_run,
            endpoint,
            inputs: self.inputs,
            outputs: self.outputs,
            params: self.params,
        };
        let path = self
            .cfg
            .out(&format!("manifests/{}.json", self.command.replace(' ', "-")));
        let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        bytes.push(b'\n');
        write_file(&path, &bytes)?;
        Ok(path)
    }
}

fn jsonl<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in rows {
        out.extend(serde_json::to_vec(r).expect("row serializes"));
        out.push(b'\n');
    }
    out
}

fn pretty(v: &impl Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("value serializes");
    out.push(b'\n');
    out
}

fn stem(path: &Path) -> String {
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("input");
    name.strip_suffix(".jsonl")
        .or_else(|| name.strip_suffix(".json"))
        .unwrap_or(name)
        .to_owned()
}

fn print_table(header: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        println!("| {} |", parts.join(" | "));
    };
    line(header.to_vec());
    println!("|{}|", widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("|"));
    for r in rows {
        line(r.iter().map(String::as_str).collect());
    }
}

fn cmd_ingest(cfg: &RunConfig, dry_run: bool, a: &IngestArgs) -> Result<(), CliError> {
    let input = a
        .input
        .clone()
        .or_else(|| cfg.corpus_path.clone())
        .ok_or_else(|| CliError::Usage("ingest needs --input or corpus_path in the config".into()))?;
    let mut run = Run::new(cfg, dry_run, "ingest");
    run.input(&input)?;
    let format = match a.format {
        Some(FormatArg::Jsonl) => InputFormat::Jsonl,
        Some(FormatArg::TextDir) => InputFormat::TextDir,
        None if input.is_dir() => InputFormat::TextDir,
        None => InputFormat::Jsonl,
    };
    let store = ingest_documents(&input, format)?;
    let out = a.out.clone().unwrap_or_else(|| cfg.out("corpus.jsonl"));
    store.save(&out)?;
    run.output(&out)?;
    let mpath = crate::distill::dataset::manifest_path(&out);
    run.write(&mpath, &pretty(store.manifest()))?;
    let m = store.manifest();
    println!(
        "ingested {} documents from {} records ({} duplicates dropped) -> {}",
        m.document_count,
        m.input_records,
        m.duplicates_dropped,
        out.display()
    );
    run.params = json!({ "format": format });
    run.finish()?;
    Ok(())
}

fn write_plan(run: &mut Run, path: &Path, plan: &[PlannedRequest]) -> Result<(), CliError> {
    run.write(path, &jsonl(plan))?;
    println!("dry run: {} requests written to {}", plan.len(), path.display());
    Ok(())
}

fn check_produced(produced: usize, requested: usize, skipped: usize) -> Result<(), CliError> {
    println!("produced {produced} / requested {requested} (skipped {skipped})");
    if (produced as f64) < MIN_PRODUCED_RATIO * requested as f64 {
        return Err(CliError::Data(format!(
            "only {produced} of {requested} samples produced (< {:.0}%)",
            MIN_PRODUCED_RATIO * 100.0
        )));
    }
    Ok(())
}

fn cmd_forge_sft(cfg: &RunConfig, dry_run: bool, a: &ForgeSftArgs) -> Result<(), CliError> {
    let corpus_path = a
        .corpus
        .clone()
        .unwrap_or_else(|| cfg.out("corpus.jsonl"));
    let mut run = Run::new(cfg, dry_run, "forge sft");
    run.input(&corpus_path)?;
    let corpus = CorpusStore::load(&corpus_path)?;
    let prompts = PromptSet::bundled();
    let mut opts = cfg.generation_options(a.temperature, a.timestamp.clone());
    if let Some(k) = a.samples_per_document {
        opts.samples_per_document = k;
    }
    run.params = json!({ "options": opts, "prompts_digest": prompts.digest() });
    if dry_run {
        let plan = plan_sft_requests(&corpus, &prompts, &opts)?;
        write_plan(&mut run, &cfg.out("requests/sft.requests.jsonl"), &plan)?;
        run.finish()?;
        return Ok(());
    }
    let client = cfg.client()?;
    let dataset = generate_sft_dataset(&corpus, &client, &prompts, &opts)?;
    let out = a.out.clone().unwrap_or_else(|| cfg.out("sft.jsonl"));
    dataset.write(&out)?;
    run.output(&out)?;
    run.output(&crate::distill::dataset::manifest_path(&out))?;
    run.finish()?;
    let m = &dataset.manifest;
    check_produced(m.sample_count, m.requested, m.skipped)
}

fn cmd_forge_po(cfg: &RunConfig, dry_run: bool, a: &ForgePoArgs) -> Result<(), CliError> {
    let sft_path = a.sft.clone().unwrap_or_else(|| cfg.out("sft.jsonl"));
    if !sft_path.exists() {
        return Err(CliError::Data(format!(
            "SFT dataset {} not found; run `forge sft` first",
            sft_path.display()
        )));
    }
    let mut run = Run::new(cfg, dry_run, "forge po");
    run.input(&sft_path)?;
    let sft: Dataset<SftSample> = Dataset::read(&sft_path)?;
    let principles = match a.principles.clone().or_else(|| cfg.principles_path.clone()) {
        Some(p) => {
            run.input(&p)?;
            PrinciplesDoc::load(&p)?
        }
        None => PrinciplesDoc::bundled(),
    };
    let exemplars = match a.exemplars.clone().or_else(|| cfg.exemplars_path.clone()) {
        Some(p) => {
            run.input(&p)?;
            ExemplarPair::load(&p)?
        }
        None => {
            log::warn!("no exemplars given; using the bundled placeholder pair");
            ExemplarPair::placeholder()
        }
    };
    let prompts = PromptSet::bundled();
    let opts = cfg.generation_options(a.temperature, a.timestamp.clone());
    run.params = json!({ "options": opts, "prompts_digest": prompts.digest() });
    if dry_run {
        let plan = plan_po_requests(&sft, &exemplars, &principles, &prompts, &opts)?;
        write_plan(&mut run, &cfg.out("requests/po.requests.jsonl"), &plan)?;
        run.finish()?;
        return Ok(());
    }
    let client = cfg.client()?;
    let dataset = generate_po_dataset(&sft, &exemplars, &principles, &client, &prompts, &opts)?;
    let out = a.out.clone().unwrap_or_else(|| cfg.out("po.jsonl"));
    dataset.write(&out)?;
    run.output(&out)?;
    run.output(&crate::distill::dataset::manifest_path(&out))?;
    run.finish()?;
    let m = &dataset.manifest;
    check_produced(m.sample_count, m.requested, m.skipped)
}

fn subset<S: Sample>(run: &mut Run, input: &Path, n: usize, seed: u64, out: &Path) -> Result<usize, CliError> {
    let ds: Dataset<S> = Dataset::read(input)?;
    let sub = sample_control_dataset(&ds, n, seed)?;
    sub.write(out)?;
    run.output(out)?;
    run.output(&crate::distill::dataset::manifest_path(out))?;
    Ok(sub.len())
}

fn cmd_sample_control(cfg: &RunConfig, dry_run: bool, a: &SampleControlArgs) -> Result<(), CliError> {
    let mut run = Run::new(cfg, dry_run, "sample-control");
    run.input(&a.input)?;
    let out = a.out.clone().unwrap_or_else(|| cfg.out("control.jsonl"));
    let n = match detect_kind(&a.input)? {
        DatasetKind::Sft => subset::<SftSample>(&mut run, &a.input, a.n, cfg.seed, &out)?,
        DatasetKind::Po => subset::<PoSample>(&mut run, &a.input, a.n, cfg.seed, &out)?,
    };
    run.params = json!({ "n": a.n, "prng": crate::distill::control::CONTROL_PRNG });
    run.finish()?;
    println!("sampled {n} rows (seed {}) -> {}", cfg.seed, out.display());
    Ok(())
}

/// Texts of a corpus store or dataset, each tagged with its source document id.
struct TextSource {
    id: String,
    checksum: String,
    items: Vec<(Option<String>, String)>,
}

fn load_texts(path: &Path) -> Result<TextSource, CliError> {
    let checksum = file_ref(path)?.sha256;
    let items = match detect_kind(path) {
        Ok(DatasetKind::Sft) => Dataset::<SftSample>::read(path)?
            .samples
            .iter()
            .map(|s| (s.meta.source_doc_id.clone(), s.text()))
            .collect(),
        Ok(DatasetKind::Po) => Dataset::<PoSample>::read(path)?
            .samples
            .iter()
            .map(|s| (s.meta.source_doc_id.clone(), s.text()))
            .collect(),
        Err(_) => CorpusStore::load(path)?
            .documents()
            .iter()
            .map(|d| (Some(d.id.clone()), d.body.clone()))
            .collect(),
    };
    Ok(TextSource {
        id: stem(path),
        checksum,
        items,
    })
}

fn texts(src: &TextSource) -> Vec<&str> {
    src.items.iter().map(|i| i.1.as_str()).collect()
}

/// Pairs by source document id when every `b` item names an `a` document,
/// otherwise by position.
fn pair_sources<'s>(a: &'s TextSource, b: &'s TextSource) -> Result<(Vec<(&'s str, &'s str)>, &'static str), CliError> {
    let by_id: BTreeMap<&str, &str> = a
        .items
        .iter()
        .filter_map(|(id, t)| id.as_deref().map(|id| (id, t.as_str())))
        .collect();
    let linked: Option<Vec<(&str, &str)>> = b
        .items
        .iter()
        .map(|(id, t)| Some((*by_id.get(id.as_deref()?)?, t.as_str())))
        .collect();
    match linked {
        Some(pairs) if !pairs.is_empty() => Ok((pairs, "source_doc_id")),
        _ if a.items.len() == b.items.len() => Ok((
            a.items.iter().zip(&b.items).map(|(x, y)| (x.1.as_str(), y.1.as_str())).collect(),
            "position",
        )),
        _ => Err(CliError::Data(format!(
            "cannot pair {} ({} items) with {} ({} items): no shared document ids and different lengths",
            a.id,
            a.items.len(),
            b.id,
            b.items.len()
        ))),
    }
}

fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

fn cmd_analyze(cfg: &RunConfig, dry_run: bool, metric: &AnalyzeCmd) -> Result<(), CliError> {
    match metric {
        AnalyzeCmd::Entropy { inputs, unit } => {
            let unit = TokenUnit::from(*unit);
            let mut run = Run::new(cfg, dry_run, "analyze entropy");
            let mut rows = Vec::new();
            for path in inputs {
                run.input(path)?;
                let src = load_texts(path)?;
                let stats = corpus_entropy_stats(&texts(&src), unit)?;
                let mut report = MetricReport::new("shannon_entropy", &unit.to_string(), stats.mean, "H / log2(vocab_size), per-document mean")
                    .with_input(&src.id, &src.checksum);
                report.detail = Some(json!({ "stddev": stats.stddev, "per_document": stats.per_document }));
                run.write(&cfg.out(&format!("metrics/entropy.{}.json", src.id)), &report.to_json())?;
                rows.push(vec![src.id.clone(), fmt3(stats.mean), fmt3(stats.stddev)]);
            }
            print_table(&["Dataset", "Avg. Shannon Entropy", "Std Dev."], &rows);
            run.params = json!({ "unit": unit });
            run.finish()?;
        }
        AnalyzeCmd::Mi { a, b, unit } => {
            let unit = TokenUnit::from(*unit);
            let mut run = Run::new(cfg, dry_run, "analyze mi");
            run.input(a)?;
            run.input(b)?;
            let (sa, sb) = (load_texts(a)?, load_texts(b)?);
            let (pairs, pairing) = pair_sources(&sa, &sb)?;
            let mi = mutual_information(&pairs, unit)?;
            let mut report = MetricReport::new("mutual_information", &unit.to_string(), mi.normalized, "I(X;Y) / min(H(X), H(Y))")
                .with_input(&sa.id, &sa.checksum)
                .with_input(&sb.id, &sb.checksum);
            report.raw_value = Some(mi.bits);
            report.detail = Some(json!({ "pairs": pairs.len(), "pairing": pairing, "entropy_x_bits": mi.entropy_x_bits, "entropy_y_bits": mi.entropy_y_bits }));
            let label = format!("{}/{}", sa.id, sb.id);
            run.write(&cfg.out(&format!("metrics/mi.{}.{}.json", sa.id, sb.id)), &report.to_json())?;
            print_table(&["Datasets", "Mutual Information"], &[vec![label, fmt3(mi.normalized)]]);
            run.params = json!({ "unit": unit, "pairing": pairing });
            run.finish()?;
        }
        AnalyzeCmd::Kl { p, q, unit, alpha } => {
            let unit = TokenUnit::from(*unit);
            let alpha = alpha.unwrap_or(KL_ALPHA);
            let mut run = Run::new(cfg, dry_run, "analyze kl");
            run.input(p)?;
            run.input(q)?;
            let (sp, sq) = (load_texts(p)?, load_texts(q)?);
            let dp = build_distribution(&texts(&sp), unit)?;
            let dq = build_distribution(&texts(&sq), unit)?;
            let kl = kl_divergence_with_alpha(&dp, &dq, alpha)?;
            let mut report = MetricReport::new("kl_divergence", &unit.to_string(), kl.normalized, "1 - exp(-D_KL)")
                .with_input(&sp.id, &sp.checksum)
                .with_input(&sq.id, &sq.checksum);
            report.raw_value = Some(kl.raw_nats);
            report.params.alpha = Some(alpha);
            run.write(&cfg.out(&format!("metrics/kl.{}.{}.json", sp.id, sq.id)), &report.to_json())?;
            print_table(
                &["Datasets", "KL-Divergence", "raw (nats)"],
                &[vec![format!("{}/{}", sp.id, sq.id), fmt3(kl.normalized), format!("{:.6}", kl.raw_nats)]],
            );
            run.params = json!({ "unit": unit, "alpha": alpha });
            run.finish()?;
        }
        AnalyzeCmd::Ppl { input, format, scope } => {
            let format = match format {
                PplFormatArg::Messages => PerplexityFormat::Messages,
                PplFormatArg::Chosen => PerplexityFormat::Chosen,
                PplFormatArg::Rejected => PerplexityFormat::Rejected,
            };
            let scope = match scope {
                ScopeArg::Full => PerplexityScope::FullText,
                ScopeArg::Completion => PerplexityScope::CompletionOnly,
            };
            let mut run = Run::new(cfg, dry_run, "analyze ppl");
            run.input(input)?;
            let conversations = match (detect_kind(input)?, format) {
                (DatasetKind::Sft, PerplexityFormat::Messages) => sft_conversations(&Dataset::read(input)?),
                (DatasetKind::Po, PerplexityFormat::Chosen | PerplexityFormat::Rejected) => {
                    po_conversations(&Dataset::read(input)?, format)
                }
                (kind, f) => {
                    return Err(CliError::Data(format!("{f} format does not apply to a {kind:?} dataset")));
                }
            };
            let id = stem(input);
            run.params = json!({ "format": format, "scope": scope, "chat_template_id": crate::trainplan::CHAT_TEMPLATE_ID });
            if dry_run {
                let reqs: Vec<Value> = conversations
                    .iter()
                    .map(|c| {
                        let text = crate::trainplan::render_chat_template(c).unwrap_or_default();
                        json!({ "context": "", "continuation": text })
                    })
                    .collect();
                let path = cfg.out(&format!("requests/ppl.{id}.requests.jsonl"));
                run.write(&path, &jsonl(&reqs))?;
                println!("dry run: {} scoring requests written to {}", reqs.len(), path.display());
                run.finish()?;
                return Ok(());
            }
            let client = cfg.client()?;
            let rep = dataset_perplexity(&client, &id, format, &conversations, scope)?;
            let mut report = MetricReport::new("perplexity", "model tokens", rep.mean_ppl, "exp(token-weighted mean NLL)")
                .with_input(&id, &file_ref(input)?.sha256);
            report.detail = Some(serde_json::to_value(&rep).expect("report serializes"));
            run.write(&cfg.out(&format!("metrics/ppl.{id}.{format}.json")), &report.to_json())?;
            print_table(
                &["Dataset", "Format", "Model", "ppl", "Failed"],
                &[vec![id, format.to_string(), rep.model_id.clone(), format!("{:.2}", rep.mean_ppl), rep.failures.len().to_string()]],
            );
            run.finish()?;
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct ExemplarQa {
    question: String,
    answer: String,
}

fn load_exemplar(path: &Path) -> Result<(String, String), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    if let Ok(qa) = serde_json::from_str::<ExemplarQa>(&text) {
        return Ok((qa.question, qa.answer));
    }
    let pair = ExemplarPair::load(path)?;
    Ok((pair.q1, pair.a1))
}

fn system_prompt_text(id: &SystemPromptId, a: &EvalArgs, cfg: &RunConfig, run: &mut Run) -> Result<String, CliError> {
    let principles = |run: &mut Run| -> Result<PrinciplesDoc, CliError> {
        match a.principles.clone().or_else(|| cfg.principles_path.clone()) {
            Some(p) => {
                run.input(&p)?;
                Ok(PrinciplesDoc::load(&p)?)
            }
            None => Ok(PrinciplesDoc::bundled()),
        }
    };
    match id {
        SystemPromptId::Baseline => Ok(BASELINE_PROMPT.to_owned()),
        SystemPromptId::AiPrinciplesV1 => Ok(build_ica_prompt(&principles(run)?, None)),
        SystemPromptId::AiPrinciplesV2 => {
            let (q, ans) = match &a.exemplar {
                Some(p) => {
                    run.input(p)?;
                    load_exemplar(p)?
                }
                None => {
                    log::warn!("ai_principles_v2 without --exemplar; using the bundled placeholder pair");
                    let p = ExemplarPair::placeholder();
                    (p.q1, p.a1)
                }
            };
            Ok(build_ica_prompt(&principles(run)?, Some((&q, &ans))))
        }
        SystemPromptId::Custom(name) => {
            let path = a
                .system_prompt_file
                .as_ref()
                .ok_or_else(|| CliError::Usage(format!("system prompt {name:?} needs --system-prompt-file")))?;
            run.input(path)?;
            fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
        }
    }
}

fn eval_requests(cfg: &EvalConfig, items: &[BenchmarkItem], prompt: &str) -> Vec<Value> {
    let mut out = Vec::new();
    for item in items {
        match cfg.mode {
            EvalMode::GenerateUntil => {
                let mut req = generation_request(item, prompt, item.task_id != TaskId::TruthfulqaMc2, cfg.max_tokens, &cfg.stop);
                req.seed = Some(cfg.seed);
                out.push(json!({ "item": item.id, "request": req }));
            }
            EvalMode::LoglikelihoodMc => {
                let answers: Vec<&String> = match &item.gold {
                    Gold::TrueFalse { true_answers, false_answers } => true_answers.iter().chain(false_answers).collect(),
                    Gold::Index(_) => item.choices.iter().collect(),
                };
                for c in answers {
                    out.push(json!({ "item": item.id, "context": mc_context(&item.question), "continuation": mc_continuation(c) }));
                }
            }
        }
    }
    out
}

fn cmd_eval(cfg: &RunConfig, dry_run: bool, a: &EvalArgs) -> Result<(), CliError> {
    let task = TaskId::from(a.task);
    let mode = match a.mode {
        ModeArg::LoglikelihoodMc => EvalMode::LoglikelihoodMc,
        ModeArg::GenerateUntil => EvalMode::GenerateUntil,
    };
    let prompt_id: SystemPromptId = a.system_prompt.parse().map_err(CliError::Usage)?;
    let mut run = Run::new(cfg, dry_run, "eval");
    run.input(&a.data)?;
    let items = load_task(task, &a.data)?;
    let mut ecfg = EvalConfig::new(task, mode, cfg.endpoint.clone());
    ecfg.system_prompt_id = prompt_id.clone();
    ecfg.limit = a.limit;
    ecfg.seed = cfg.seed;
    if let Some(m) = a.max_tokens {
        ecfg.max_tokens = m;
    }
    let prompt = match mode {
        EvalMode::GenerateUntil => Some(system_prompt_text(&prompt_id, a, cfg, &mut run)?),
        EvalMode::LoglikelihoodMc => None,
    };
    let name = format!("{task}.{mode}.{prompt_id}");
    run.params = json!({ "task": task, "mode": mode, "system_prompt_id": prompt_id, "limit": a.limit, "items_loaded": items.len() });
    if dry_run {
        let limited = &items[..a.limit.map_or(items.len(), |l| l.min(items.len()))];
        let reqs = eval_requests(&ecfg, limited, prompt.as_deref().unwrap_or(""));
        let path = cfg.out(&format!("requests/eval.{name}.requests.jsonl"));
        run.write(&path, &jsonl(&reqs))?;
        println!("dry run: {} requests written to {}", reqs.len(), path.display());
        run.finish()?;
        return Ok(());
    }
    let mut client_cfg = cfg.clone();
    if mode == EvalMode::GenerateUntil {
        client_cfg.endpoint.supports_logprobs = cfg.endpoint.supports_logprobs;
    }
    let client = client_cfg.client()?;
    ecfg.endpoint = client.config().clone();
    let mut report = run_eval(&ecfg, &items, &client, prompt.as_deref(), &a.data.display().to_string())?;
    if let Some(bp) = &a.baseline_report {
        run.input(bp)?;
        let bytes = fs::read(bp).map_err(|e| CliError::Data(format!("cannot read {}: {e}", bp.display())))?;
        let baseline = EvalReport::from_json(&bytes)?;
        report.compare_to(&baseline, &stem(bp))?;
    }
    run.write(&cfg.out(&format!("eval/{name}.json")), &report.to_json())?;
    run.write(&cfg.out(&format!("eval/{name}.csv")), report.to_csv().as_bytes())?;
    let agg = &report.aggregates;
    let mut rows: Vec<Vec<String>> = agg
        .metrics()
        .into_iter()
        .map(|(k, v)| {
            let delta = report
                .baseline_deltas
                .iter()
                .find(|d| d.metric == k)
                .map(|d| crate::evalkit::format_percent(d.relative_improvement_pct))
                .unwrap_or_default();
            vec![k.to_owned(), format!("{v:.4}"), delta]
        })
        .collect();
    rows.push(vec!["items scored".into(), format!("{}/{}", agg.items_scored, agg.items_total), String::new()]);
    println!("{task} / {mode} / {prompt_id}");
    print_table(&["Metric", "Value", "vs baseline"], &rows);
    run.finish()?;
    Ok(())
}

fn export<S: Sample>(run: &mut Run, input: &Path, out: &Path) -> Result<(), CliError> {
    let ds: Dataset<S> = Dataset::read(input)?;
    export_dataset(&ds, out)?;
    run.output(out)?;
    run.output(&crate::distill::dataset::manifest_path(out))?;
    Ok(())
}

fn cmd_export(cfg: &RunConfig, dry_run: bool, stage: TrainStage, a: &ExportArgs) -> Result<(), CliError> {
    let label = match stage {
        TrainStage::Sft => "sft",
        TrainStage::Orpo => "orpo",
    };
    let mut run = Run::new(cfg, dry_run, &format!("export-train {label}"));
    run.input(&a.input)?;
    let kind = detect_kind(&a.input)?;
    if kind != stage.dataset_kind() {
        return Err(CliError::Data(format!(
            "{label} export needs a {:?} dataset, {} is {kind:?}",
            stage.dataset_kind(),
            a.input.display()
        )));
    }
    let out = a.out.clone().unwrap_or_else(|| cfg.out(&format!("train/{label}.jsonl")));
    match stage {
        TrainStage::Sft => export::<SftSample>(&mut run, &a.input, &out)?,
        TrainStage::Orpo => export::<PoSample>(&mut run, &a.input, &out)?,
    }
    let base = a.base_model.clone().unwrap_or_else(|| cfg.base_model_id.clone());
    let recipe = emit_recipe(stage, &out, &base)?;
    let rpath = cfg.out(&format!("train/{label}.recipe.json"));
    run.write(&rpath, &recipe.to_json())?;
    println!(
        "{label}: epochs {}, dropout {}, rank {}, alpha {} -> {}",
        recipe.epochs,
        recipe.qlora.dropout,
        recipe.qlora.rank,
        recipe.qlora.alpha,
        rpath.display()
    );
    run.params = json!({ "stage": stage, "base_model_id": base });
    run.finish()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ReportRow {
    family: ReportFamily,
    task: String,
    mode: String,
    system_prompt: String,
    model: String,
    metric: String,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    relative_improvement_pct: Option<f64>,
}

fn cmd_report(cfg: &RunConfig, dry_run: bool, a: &ReportArgs) -> Result<(), CliError> {
    let mut run = Run::new(cfg, dry_run, "report");
    let read = |p: &Path| -> Result<EvalReport, CliError> {
        let bytes = fs::read(p).map_err(|e| CliError::Data(format!("cannot read {}: {e}", p.display())))?;
        Ok(EvalReport::from_json(&bytes)?)
    };
    let baseline = match &a.baseline {
        Some(p) => {
            run.input(p)?;
            Some(read(p)?)
        }
        None => None,
    };
    let mut rows = Vec::new();
    for p in &a.inputs {
        run.input(p)?;
        let mut r = read(p)?;
        if let Some(b) = &baseline {
            if b.family == r.family && b.config.task_id == r.config.task_id {
                r.compare_to(b, "baseline")?;
            }
        }
        for (metric, value) in r.aggregates.metrics() {
            rows.push(ReportRow {
                family: r.family,
                task: r.config.task_id.to_string(),
                mode: r.config.mode.to_string(),
                system_prompt: r.config.system_prompt_id.to_string(),
                model: r.config.endpoint.model_id.clone(),
                metric: metric.to_owned(),
                value,
                relative_improvement_pct: r
                    .baseline_deltas
                    .iter()
                    .find(|d| d.metric == metric)
                    .map(|d| d.relative_improvement_pct),
            });
        }
    }
    for family in [ReportFamily::Mc, ReportFamily::Ica] {
        let table: Vec<Vec<String>> = rows
            .iter()
            .filter(|r| r.family == family)
            .map(|r| {
                vec![
                    r.task.clone(),
                    r.system_prompt.clone(),
                    r.model.clone(),
                    r.metric.clone(),
                    format!("{:.4}", r.value),
                    r.relative_improvement_pct.map(crate::evalkit::format_percent).unwrap_or_default(),
                ]
            })
            .collect();
        if !table.is_empty() {
            println!("{}", if family == ReportFamily::Mc { "multiple choice (loglikelihood)" } else { "in-context alignment (generate_until)" });
            print_table(&["Task", "System prompt", "Model", "Metric", "Value", "vs baseline"], &table);
        }
    }
    let mut csv = String::from("family,task,mode,system_prompt,model,metric,value,relative_improvement_pct\n");
    for r in &rows {
        let fam = serde_json::to_value(r.family).expect("family serializes");
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fam.as_str().unwrap_or_default(),
            r.task,
            r.mode,
            r.system_prompt,
            r.model,
            r.metric,
            r.value,
            r.relative_improvement_pct.map(|v| format!("{v:.2}")).unwrap_or_default()
        ));
    }
    run.write(&cfg.out("report.json"), &pretty(&rows))?;
    run.write(&cfg.out("report.csv"), csv.as_bytes())?;
    run.finish()?;
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&cli.global)?;
    let dry = cli.global.dry_run;
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(&cfg, dry, a),
        Command::Forge { stage: ForgeStage::Sft(a) } => cmd_forge_sft(&cfg, dry, a),
        Command::Forge { stage: ForgeStage::Po(a) } => cmd_forge_po(&cfg, dry, a),
        Command::SampleControl(a) => cmd_sample_control(&cfg, dry, a),
        Command::Analyze { metric } => cmd_analyze(&cfg, dry, metric),
        Command::Eval(a) => cmd_eval(&cfg, dry, a),
        Command::ExportTrain { stage: ExportStage::Sft(a) } => cmd_export(&cfg, dry, TrainStage::Sft, a),
        Command::ExportTrain { stage: ExportStage::Orpo(a) } => cmd_export(&cfg, dry, TrainStage::Orpo, a),
        Command::Report(a) => cmd_report(&cfg, dry, a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
