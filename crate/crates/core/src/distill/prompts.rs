//! Versioned prompt templates. Templates are bundled text assets; their
//! digest is recorded in every dataset manifest.

use serde::{Deserialize, Serialize};

use super::principles::{ExemplarPair, PrinciplesDoc};
use super::DistillError;
use crate::corpus::Document;
use crate::digest::sha256_parts;

pub const PROMPTS_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub version: String,
    pub sft: String,
    pub po_chosen: String,
    pub po_rejected: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::bundled()
    }
}

impl PromptSet {
    pub fn bundled() -> Self {
        Self {
            version: PROMPTS_VERSION.into(),
            sft: include_str!("../../assets/prompts/sft_v1.txt").into(),
            po_chosen: include_str!("../../assets/prompts/po_chosen_v1.txt").into(),
            po_rejected: include_str!("../../assets/prompts/po_rejected_v1.txt").into(),
        }
    }

    pub fn digest(&self) -> String {
        sha256_parts([
            self.version.as_str(),
            self.sft.as_str(),
            self.po_chosen.as_str(),
            self.po_rejected.as_str(),
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Chosen,
    Rejected,
}

/// Replaces `{name}` placeholders in a single left-to-right pass, so
/// substituted values are never themselves rescanned.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let name = &after[..close];
            values
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn render_sft_prompt(prompts: &PromptSet, doc: &Document) -> Result<String, DistillError> {
    if doc.body.trim().is_empty() {
        return Err(DistillError::Input(format!("document {} has an empty body", doc.id)));
    }
    Ok(fill(&prompts.sft, &[("context", &doc.body)]))
}

/// The `{context}` block of the rewrite prompts.
pub fn render_qa_context(question: &str, answer: &str) -> String {
    format!("Question: {question}\nAnswer: {answer}")
}

pub fn render_po_prompt(
    prompts: &PromptSet,
    question: &str,
    answer: &str,
    ex: &ExemplarPair,
    principles: &PrinciplesDoc,
    polarity: Polarity,
) -> String {
    let template = match polarity {
        Polarity::Chosen => &prompts.po_chosen,
        Polarity::Rejected => &prompts.po_rejected,
    };
    let context = render_qa_context(question, answer);
    let rendered = principles.rendered();
    fill(
        template,
        &[
            ("q1", &ex.q1),
            ("a1", &ex.a1),
            ("q2", &ex.q2),
            ("a2", &ex.a2),
            ("context", &context),
            ("abc_ai_principles", &rendered),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(body: &str) -> Document {
        Document {
            id: "d".into(),
            title: "t".into(),
            body: body.into(),
            source_uri: String::new(),
            published_at: None,
            checksum: String::new(),
        }
    }

    #[test]
    fn sft_prompt_verbatim() {
        let p = render_sft_prompt(&PromptSet::bundled(), &doc("X")).unwrap();
        assert_eq!(
            p,
            "Deduce any reasoning or logical problems from this article: X Generate a complex \
             question and a logical answer that requires step-by-step thinking, and elaborate on \
             this thinking process as part of the answer. Both the question and answer must not \
             refer to the original article."
        );
        assert!(render_sft_prompt(&PromptSet::bundled(), &doc("")).is_err());
    }

    #[test]
    fn po_polarity_clauses() {
        let prompts = PromptSet::bundled();
        let ex = ExemplarPair::placeholder();
        let pr = PrinciplesDoc::bundled();
        let chosen = render_po_prompt(&prompts, "Q?", "A.", &ex, &pr, Polarity::Chosen);
        let rejected = render_po_prompt(&prompts, "Q?", "A.", &ex, &pr, Polarity::Rejected);
        assert!(chosen.contains("better align with these principles"));
        assert!(!chosen.contains("unaligned"));
        assert!(rejected.contains("be unaligned with these principles"));
        for p in [&chosen, &rejected] {
            assert!(p.ends_with(
                "Do not reference the principles in your response. Include only the text of the answer."
            ));
            assert!(p.contains("Question: Q?\nAnswer: A."));
            assert!(p.contains(&pr.rendered()));
        }
        assert_eq!(chosen, render_po_prompt(&prompts, "Q?", "A.", &ex, &pr, Polarity::Chosen));
    }

    #[test]
    fn fill_is_single_pass() {
        assert_eq!(fill("{a}-{b}", &[("a", "{b}"), ("b", "x")]), "{b}-x");
        assert_eq!(fill("{unknown} {a}", &[("a", "1")]), "{unknown} 1");
        assert_eq!(fill("open { brace", &[]), "open { brace");
    }
}
