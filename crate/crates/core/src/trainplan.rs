//! Chat-template rendering, dataset export and fine-tuning recipes for an
//! external trainer. Nothing here trains a model.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::sha256_hex;
use crate::distill::{detect_kind, Dataset, DatasetKind, Sample};
use crate::llm::{ChatMessage, Role};

pub const CHAT_TEMPLATE_ID: &str = "zephyr-v1";
const END_OF_TURN: &str = "</s>";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty message list")]
    Empty,
    #[error("role order: {0}")]
    RoleOrder(String),
    #[error("unknown role tag {0:?}")]
    UnknownRole(String),
    #[error("malformed rendering: {0}")]
    Malformed(String),
    #[error("dataset format: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}

fn check_order(messages: &[ChatMessage]) -> Result<(), TrainError> {
    if messages.is_empty() {
        return Err(TrainError::Empty);
    }
    let rest = match messages.split_first() {
        Some((first, rest)) if first.role == Role::System => rest,
        _ => messages,
    };
    for (i, m) in rest.iter().enumerate() {
        let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
        if m.role != expected {
            return Err(TrainError::RoleOrder(format!(
                "position {i} after the optional system message is {}, expected {expected}",
                m.role
            )));
        }
    }
    Ok(())
}

/// `<|role|>\n{content}</s>\n` per message, no trailing generation prompt.
pub fn render_chat_template(messages: &[ChatMessage]) -> Result<String, TrainError> {
    check_order(messages)?;
    let mut out = String::new();
    for m in messages {
        out.push_str("<|");
        out.push_str(m.role.as_str());
        out.push_str("|>\n");
        out.push_str(&m.content);
        out.push_str(END_OF_TURN);
        out.push('\n');
    }
    Ok(out)
}

/// Inverse of [`render_chat_template`] for contents free of template markers.
pub fn parse_chat_template(text: &str) -> Result<Vec<ChatMessage>, TrainError> {
    let mut out = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        let tag_body = rest
            .strip_prefix("<|")
            .ok_or_else(|| TrainError::Malformed(format!("expected role tag at {rest:?}")))?;
        let (tag, after) = tag_body
            .split_once("|>\n")
            .ok_or_else(|| TrainError::Malformed("unterminated role tag".into()))?;
        let role = match tag {
            "system" => Role::System,
            "user" => Role::User,
            "assistant" => Role::Assistant,
            other => return Err(TrainError::UnknownRole(other.to_owned())),
        };
        let terminator = format!("{END_OF_TURN}\n");
        let end = after
            .find(&terminator)
            .ok_or_else(|| TrainError::Malformed("missing end-of-turn".into()))?;
        out.push(ChatMessage::new(role, &after[..end]));
        rest = &after[end + terminator.len()..];
    }
    check_order(&out)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QloraConfig {
    pub dropout: f64,
    pub rank: u32,
    pub alpha: u32,
    /// rank / alpha, derived.
    pub ratio: f64,
}

impl QloraConfig {
    pub fn new(dropout: f64, rank: u32, alpha: u32) -> Self {
        Self {
            dropout,
            rank,
            alpha,
            ratio: rank as f64 / alpha as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TrainStage {
    Sft,
    Orpo,
}

impl TrainStage {
    pub fn epochs(self) -> u32 {
        match self {
            TrainStage::Sft => 23,
            TrainStage::Orpo => 10,
        }
    }

    pub fn qlora(self) -> QloraConfig {
        match self {
            TrainStage::Sft => QloraConfig::new(0.1, 64, 16),
            TrainStage::Orpo => QloraConfig::new(0.05, 16, 32),
        }
    }

    pub fn dataset_kind(self) -> DatasetKind {
        match self {
            TrainStage::Sft => DatasetKind::Sft,
            TrainStage::Orpo => DatasetKind::Po,
        }
    }

    fn format_name(self) -> &'static str {
        match self {
            TrainStage::Sft => "messages",
            TrainStage::Orpo => "chosen/rejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecipe {
    pub stage: TrainStage,
    pub base_model_id: String,
    pub epochs: u32,
    pub qlora: QloraConfig,
    pub dataset_path: String,
    pub dataset_checksum: String,
    pub dataset_format: String,
    pub chat_template_id: String,
    pub notes: String,
}

impl TrainRecipe {
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("recipe serializes");
        out.push(b'\n');
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), TrainError> {
        crate::corpus::write_file(path, &self.to_json()).map_err(|e| TrainError::Io(e.to_string()))
    }
}

const RECIPE_NOTES: &str = "Evaluate the checkpoint saved after every epoch against the selected \
benchmarks and keep the best-scoring one. Optimizer, learning-rate schedule and batch size are \
left to the trainer defaults.";

/// Builds a recipe for the dataset file at `dataset_path`, pinning its checksum.
pub fn emit_recipe(
    stage: TrainStage,
    dataset_path: &Path,
    base_model_id: &str,
) -> Result<TrainRecipe, TrainError> {
    let kind = detect_kind(dataset_path).map_err(|e| TrainError::Format(e.to_string()))?;
    if kind != stage.dataset_kind() {
        return Err(TrainError::Format(format!(
            "{:?} recipe needs a {} dataset, {} is {:?}",
            stage,
            stage.format_name(),
            dataset_path.display(),
            kind
        )));
    }
    let bytes = fs::read(dataset_path)
        .map_err(|e| TrainError::Io(format!("cannot read {}: {e}", dataset_path.display())))?;
    Ok(TrainRecipe {
        stage,
        base_model_id: base_model_id.to_owned(),
        epochs: stage.epochs(),
        qlora: stage.qlora(),
        dataset_path: dataset_path.display().to_string(),
        dataset_checksum: sha256_hex(&bytes),
        dataset_format: stage.format_name().into(),
        chat_template_id: CHAT_TEMPLATE_ID.into(),
        notes: RECIPE_NOTES.into(),
    })
}

pub fn emit_sft_recipe(dataset_path: &Path, base_model_id: &str) -> Result<TrainRecipe, TrainError> {
    emit_recipe(TrainStage::Sft, dataset_path, base_model_id)
}

pub fn emit_orpo_recipe(dataset_path: &Path, base_model_id: &str) -> Result<TrainRecipe, TrainError> {
    emit_recipe(TrainStage::Orpo, dataset_path, base_model_id)
}

/// Writes the dataset as trainer-ready JSONL (plus manifest); returns the file checksum.
pub fn export_dataset<S: Sample>(dataset: &Dataset<S>, out_path: &Path) -> Result<String, TrainError> {
    dataset
        .validate()
        .map_err(|e| TrainError::Format(e.to_string()))?;
    dataset
        .write(out_path)
        .map_err(|e| TrainError::Io(e.to_string()))
}
