use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::DistillError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseRule {
    Labelled,
    Interrogative,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedQa {
    pub question: String,
    pub answer: String,
    pub rule: ParseRule,
}

fn labelled_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let label = |word: &str| format!(r"(?:#+\s*)?\*{{0,2}}\s*{word}\s*\*{{0,2}}\s*:\s*\*{{0,2}}");
        Regex::new(&format!(
            r"(?is){}\s*(?P<q>.*?)\s*{}\s*(?P<a>.*)",
            label("question"),
            label("answer")
        ))
        .expect("valid regex")
    })
}

fn clean(s: &str) -> String {
    s.trim().trim_matches('*').trim().to_string()
}

/// Splits a generated response into question and answer.
///
/// Tries `Question:` / `Answer:` labels first (any case, optional markdown
/// bold), then falls back to the first sentence ending in `?`.
pub fn parse_qa_response(text: &str) -> Result<ParsedQa, DistillError> {
    if text.trim().is_empty() {
        return Err(DistillError::Parse("empty response".into()));
    }
    if let Some(caps) = labelled_regex().captures(text) {
        let question = clean(&caps["q"]);
        let answer = clean(&caps["a"]);
        if !question.is_empty() && !answer.is_empty() {
            return Ok(ParsedQa {
                question,
                answer,
                rule: ParseRule::Labelled,
            });
        }
    }
    if let Some(qmark) = text.find('?') {
        let start = text[..qmark]
            .rfind(['.', '!', '\n'])
            .map(|i| i + 1)
            .unwrap_or(0);
        let question = clean(&text[start..=qmark]);
        let answer = clean(&text[qmark + 1..]);
        if !question.is_empty() && question != "?" && !answer.is_empty() {
            return Ok(ParsedQa {
                question,
                answer,
                rule: ParseRule::Interrogative,
            });
        }
    }
    Err(DistillError::Parse(format!(
        "no question/answer structure in response starting {:?}",
        text.chars().take(60).collect::<String>()
    )))
}
