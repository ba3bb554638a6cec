use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distill::PrinciplesDoc;

const PREAMBLE: &str = include_str!("../../assets/prompts/ica_preamble_v1.txt");
const EXAMPLE_PREAMBLE: &str = include_str!("../../assets/prompts/ica_example_preamble_v1.txt");
pub const BASELINE_PROMPT: &str = include_str!("../../assets/prompts/baseline.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SystemPromptId {
    Baseline,
    AiPrinciplesV1,
    AiPrinciplesV2,
    /// A user-supplied prompt, e.g. `rag_v1` or `custom`.
    Custom(String),
}

impl fmt::Display for SystemPromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SystemPromptId::Baseline => "baseline",
            SystemPromptId::AiPrinciplesV1 => "ai_principles_v1",
            SystemPromptId::AiPrinciplesV2 => "ai_principles_v2",
            SystemPromptId::Custom(name) => name,
        })
    }
}

impl FromStr for SystemPromptId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "baseline" => SystemPromptId::Baseline,
            "ai_principles_v1" => SystemPromptId::AiPrinciplesV1,
            "ai_principles_v2" => SystemPromptId::AiPrinciplesV2,
            "" => return Err("empty system prompt id".into()),
            other => SystemPromptId::Custom(other.to_owned()),
        })
    }
}

impl From<SystemPromptId> for String {
    fn from(id: SystemPromptId) -> String {
        id.to_string()
    }
}

impl TryFrom<String> for SystemPromptId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Principles system prompt; with an exemplar the question/answer pair is
/// appended after the example preamble.
pub fn build_ica_prompt(principles: &PrinciplesDoc, exemplar: Option<(&str, &str)>) -> String {
    let mut out = String::from(PREAMBLE);
    for p in principles.principles() {
        out.push_str(&format!("\n\n{}\n{}", p.name, p.definition));
    }
    if let Some((q, a)) = exemplar {
        out.push_str(&format!("\n\n{EXAMPLE_PREAMBLE}\n\nQuestion: {q}\nAnswer: {a}"));
    }
    out
}
