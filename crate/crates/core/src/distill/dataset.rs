use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::DistillError;
use crate::digest::sha256_hex;
use crate::llm::{ChatMessage, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Instruction data in `messages` format.
    Sft,
    /// Preference data in `prompt` / `chosen` / `rejected` format.
    Po,
}

/// Provenance of a generated sample.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_doc_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_rule: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftSample {
    pub messages: Vec<ChatMessage>,
    #[serde(default)]
    pub meta: SampleMeta,
}

impl SftSample {
    pub fn user_content(&self) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    pub fn assistant_content(&self) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.role == Role::Assistant)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoSample {
    pub prompt: String,
    pub chosen: Vec<ChatMessage>,
    pub rejected: Vec<ChatMessage>,
    #[serde(default)]
    pub meta: SampleMeta,
}

impl PoSample {
    pub fn new(prompt: &str, chosen: &str, rejected: &str, meta: SampleMeta) -> Self {
        Self {
            prompt: prompt.to_owned(),
            chosen: vec![ChatMessage::user(prompt), ChatMessage::assistant(chosen)],
            rejected: vec![ChatMessage::user(prompt), ChatMessage::assistant(rejected)],
            meta,
        }
    }
}

fn final_assistant(messages: &[ChatMessage]) -> Option<&str> {
    messages
        .last()
        .filter(|m| m.role == Role::Assistant)
        .map(|m| m.content.as_str())
}

fn user_contents(messages: &[ChatMessage]) -> Vec<&str> {
    messages
        .iter()
        .filter(|m| m.role == Role::User)
        .map(|m| m.content.as_str())
        .collect()
}

/// A homogeneous dataset row type.
pub trait Sample: Serialize + DeserializeOwned + Clone + Send + Sync {
    const KIND: DatasetKind;

    /// Shape invariants every emitted sample must satisfy.
    fn check_shape(&self) -> Result<(), String>;

    fn meta(&self) -> &SampleMeta;

    /// All message contents joined, for text statistics.
    fn text(&self) -> String;
}

impl Sample for SftSample {
    const KIND: DatasetKind = DatasetKind::Sft;

    fn check_shape(&self) -> Result<(), String> {
        let body = match self.messages.split_first() {
            Some((first, rest)) if first.role == Role::System => rest,
            _ => self.messages.as_slice(),
        };
        match body {
            [u, a] if u.role == Role::User && a.role == Role::Assistant => {
                if u.content.trim().is_empty() || a.content.trim().is_empty() {
                    Err("empty user or assistant content".into())
                } else {
                    Ok(())
                }
            }
            _ => Err(format!(
                "expected [system?] user assistant, got roles {:?}",
                self.messages.iter().map(|m| m.role.as_str()).collect::<Vec<_>>()
            )),
        }
    }

    fn meta(&self) -> &SampleMeta {
        &self.meta
    }

    fn text(&self) -> String {
        self.messages
            .iter()
            .filter(|m| m.role != Role::System)
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl Sample for PoSample {
    const KIND: DatasetKind = DatasetKind::Po;

    fn check_shape(&self) -> Result<(), String> {
        let chosen_users = user_contents(&self.chosen);
        if chosen_users != user_contents(&self.rejected) {
            return Err("chosen and rejected prompts differ".into());
        }
        if chosen_users.last().copied() != Some(self.prompt.as_str()) {
            return Err("prompt does not match the final user message".into());
        }
        match (final_assistant(&self.chosen), final_assistant(&self.rejected)) {
            (Some(c), Some(r)) if c.trim().is_empty() || r.trim().is_empty() => {
                Err("empty chosen or rejected answer".into())
            }
            (Some(c), Some(r)) if c == r => Err("chosen equals rejected".into()),
            (Some(_), Some(_)) => Ok(()),
            _ => Err("chosen/rejected must end with an assistant message".into()),
        }
    }

    fn meta(&self) -> &SampleMeta {
        &self.meta
    }

    fn text(&self) -> String {
        let mut parts = vec![self.prompt.as_str()];
        parts.extend(final_assistant(&self.chosen));
        parts.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub source_doc_id: Option<String>,
    pub reason: String,
}

/// How a control dataset was drawn from its parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetInfo {
    pub parent_checksum: String,
    pub parent_size: usize,
    pub n: usize,
    pub seed: u64,
    pub prng: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub kind: DatasetKind,
    pub sample_count: usize,
    pub requested: usize,
    pub skipped: usize,
    #[serde(default)]
    pub skips: Vec<SkipRecord>,
    /// Corpus checksum (sft) or parent dataset checksum (po, control).
    pub source_checksum: Option<String>,
    pub prompts_digest: Option<String>,
    pub prompts_version: Option<String>,
    pub model_id: Option<String>,
    pub seed: Option<u64>,
    pub temperature: Option<f64>,
    #[serde(default)]
    pub samples_per_document: Option<usize>,
    #[serde(default)]
    pub subset: Option<SubsetInfo>,
    pub tool_version: String,
}

impl DatasetManifest {
    pub fn bare(kind: DatasetKind, sample_count: usize) -> Self {
        Self {
            kind,
            sample_count,
            requested: sample_count,
            skipped: 0,
            skips: Vec::new(),
            source_checksum: None,
            prompts_digest: None,
            prompts_version: None,
            model_id: None,
            seed: None,
            temperature: None,
            samples_per_document: None,
            subset: None,
            tool_version: crate::TOOL_VERSION.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    pub samples: Vec<S>,
    pub manifest: DatasetManifest,
}

pub fn manifest_path(data_path: &Path) -> PathBuf {
    let mut name = data_path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    data_path.with_file_name(name)
}

impl<S: Sample> Dataset<S> {
    /// Wraps samples read from elsewhere (e.g. a public control dataset).
    pub fn from_samples(samples: Vec<S>) -> Self {
        let manifest = DatasetManifest::bare(S::KIND, samples.len());
        Self { samples, manifest }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<(), DistillError> {
        if self.manifest.kind != S::KIND {
            return Err(DistillError::Validation(format!(
                "manifest kind {:?} does not match sample kind {:?}",
                self.manifest.kind,
                S::KIND
            )));
        }
        if self.manifest.sample_count != self.samples.len() {
            return Err(DistillError::Validation(format!(
                "manifest sample_count {} != {} samples",
                self.manifest.sample_count,
                self.samples.len()
            )));
        }
        for (i, s) in self.samples.iter().enumerate() {
            s.check_shape()
                .map_err(|e| DistillError::Validation(format!("sample {i}: {e}")))?;
        }
        Ok(())
    }

    /// JSONL bytes, one sample per line.
    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for s in &self.samples {
            serde_json::to_writer(&mut out, s).expect("sample serializes");
            out.push(b'\n');
        }
        out
    }

    pub fn content_checksum(&self) -> String {
        sha256_hex(self.to_jsonl())
    }

    /// Writes the JSONL file plus its manifest sidecar; returns the data checksum.
    pub fn write(&self, path: &Path) -> Result<String, DistillError> {
        let data = self.to_jsonl();
        let io = |e: crate::corpus::CorpusError| DistillError::Io(e.to_string());
        crate::corpus::write_file(path, &data).map_err(io)?;
        let mut manifest = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        manifest.push(b'\n');
        crate::corpus::write_file(&manifest_path(path), &manifest).map_err(io)?;
        Ok(sha256_hex(&data))
    }

    /// Reads a JSONL dataset; uses the manifest sidecar when present.
    pub fn read(path: &Path) -> Result<Self, DistillError> {
        let text = fs::read_to_string(path)
            .map_err(|e| DistillError::Io(format!("cannot read {}: {e}", path.display())))?;
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let s: S = serde_json::from_str(line).map_err(|e| {
                DistillError::Format(format!(
                    "{}:{}: not a {:?} sample: {e}",
                    path.display(),
                    i + 1,
                    S::KIND
                ))
            })?;
            samples.push(s);
        }
        let mpath = manifest_path(path);
        let manifest = if mpath.exists() {
            let m = fs::read_to_string(&mpath)
                .map_err(|e| DistillError::Io(format!("cannot read {}: {e}", mpath.display())))?;
            serde_json::from_str(&m)
                .map_err(|e| DistillError::Format(format!("bad manifest {}: {e}", mpath.display())))?
        } else {
            DatasetManifest::bare(S::KIND, samples.len())
        };
        let ds = Self { samples, manifest };
        if ds.manifest.kind != S::KIND {
            return Err(DistillError::Format(format!(
                "{} holds a {:?} dataset, expected {:?}",
                path.display(),
                ds.manifest.kind,
                S::KIND
            )));
        }
        Ok(ds)
    }
}

/// Sniffs the dataset kind from the first non-empty line of a JSONL file.
pub fn detect_kind(path: &Path) -> Result<DatasetKind, DistillError> {
    let text = fs::read_to_string(path)
        .map_err(|e| DistillError::Io(format!("cannot read {}: {e}", path.display())))?;
    let first = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| DistillError::Format(format!("{} is empty", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(first)
        .map_err(|e| DistillError::Format(format!("{}: {e}", path.display())))?;
    if value.get("chosen").is_some() && value.get("rejected").is_some() {
        Ok(DatasetKind::Po)
    } else if value.get("messages").is_some() {
        Ok(DatasetKind::Sft)
    } else {
        Err(DistillError::Format(format!(
            "{}: neither a messages nor a chosen/rejected dataset",
            path.display()
        )))
    }
}
