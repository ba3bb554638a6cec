use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::task::{BenchmarkItem, Gold};
use crate::llm::{ChatRequest, Client, LlmError};
use crate::metrics::words;

pub const DEFAULT_STOP: &str = "\n\n";
pub const DEFAULT_MAX_TOKENS: u32 = 256;

pub fn mc_context(question: &str) -> String {
    format!("Question: {question}\nAnswer:")
}

pub fn mc_continuation(choice: &str) -> String {
    format!(" {choice}")
}

/// Index of the maximum, lowest index on ties. NaN never wins.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McOutcome {
    pub loglikelihoods: Vec<f64>,
    pub choice_bytes: Vec<usize>,
    pub chosen: usize,
    pub chosen_norm: usize,
    pub correct: bool,
    pub correct_norm: bool,
}

/// Picks raw and per-byte argmax answers from choice loglikelihoods.
pub fn decide_multiple_choice(item: &BenchmarkItem, loglikelihoods: Vec<f64>) -> McOutcome {
    let choice_bytes: Vec<usize> = item.choices.iter().map(|c| c.len().max(1)).collect();
    let norm: Vec<f64> = loglikelihoods
        .iter()
        .zip(&choice_bytes)
        .map(|(ll, &b)| ll / b as f64)
        .collect();
    let chosen = argmax(&loglikelihoods).unwrap_or(0);
    let chosen_norm = argmax(&norm).unwrap_or(0);
    let gold = item.gold_index();
    McOutcome {
        loglikelihoods,
        choice_bytes,
        chosen,
        chosen_norm,
        correct: gold == Some(chosen),
        correct_norm: gold == Some(chosen_norm),
    }
}

fn score_choices(client: &Client, question: &str, choices: &[String]) -> Result<Vec<f64>, LlmError> {
    let ctx = mc_context(question);
    choices
        .iter()
        .map(|c| {
            client
                .score_continuation(&ctx, &mc_continuation(c))
                .map(|s| s.loglikelihood)
        })
        .collect()
}

pub fn score_multiple_choice(item: &BenchmarkItem, client: &Client) -> Result<McOutcome, LlmError> {
    if item.gold_index().is_none() {
        return Err(LlmError::Request(format!("item {} is not index-scored", item.id)));
    }
    Ok(decide_multiple_choice(item, score_choices(client, &item.question, &item.choices)?))
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Probability mass on the true set: Σ exp(true) / Σ exp(all).
pub fn mc2_from_loglikelihoods(true_ll: &[f64], false_ll: &[f64]) -> Option<f64> {
    let all: Vec<f64> = true_ll.iter().chain(false_ll).copied().collect();
    let total = log_sum_exp(&all);
    if !total.is_finite() || true_ll.is_empty() {
        return None;
    }
    Some((log_sum_exp(true_ll) - total).exp().clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mc2Outcome {
    pub true_loglikelihoods: Vec<f64>,
    pub false_loglikelihoods: Vec<f64>,
    pub mc2: f64,
}

pub fn score_truthfulqa_mc2(item: &BenchmarkItem, client: &Client) -> Result<Mc2Outcome, LlmError> {
    let Gold::TrueFalse { true_answers, false_answers } = &item.gold else {
        return Err(LlmError::Request(format!("item {} has no true/false answer sets", item.id)));
    };
    let true_ll = score_choices(client, &item.question, true_answers)?;
    let false_ll = score_choices(client, &item.question, false_answers)?;
    let mc2 = mc2_from_loglikelihoods(&true_ll, &false_ll).ok_or_else(|| {
        LlmError::Request(format!("item {}: every answer has zero likelihood", item.id))
    })?;
    Ok(Mc2Outcome {
        true_loglikelihoods: true_ll,
        false_loglikelihoods: false_ll,
        mc2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractRule {
    Letter,
    TextMatch,
    TokenOverlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    /// `None` is an abstention.
    pub index: Option<usize>,
    pub rule: Option<ExtractRule>,
}

impl Extraction {
    pub const ABSTAIN: Extraction = Extraction { index: None, rule: None };
}

pub fn choice_letter(i: usize) -> char {
    (b'A' + (i % 26) as u8) as char
}

fn letter_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?:\(([A-Z])\))|(?:\b([A-Z])[).](?:\s|$))|(?:(?i:answer\s+is)\s*:?\s*\(?([A-Z])\b)")
            .expect("letter regex")
    })
}

fn token_set(s: &str) -> BTreeSet<String> {
    words(s).collect()
}

pub const OVERLAP_THRESHOLD: f64 = 0.8;

/// Maps a free-form generation to a choice index.
pub fn extract_choice(generation: &str, choices: &[String]) -> Extraction {
    let n = choices.len().min(26);
    for caps in letter_regex().captures_iter(generation) {
        let letter = (1..=3).find_map(|g| caps.get(g)).map(|m| m.as_str().as_bytes()[0]);
        if let Some(l) = letter {
            let idx = (l - b'A') as usize;
            if idx < n {
                return Extraction { index: Some(idx), rule: Some(ExtractRule::Letter) };
            }
        }
    }

    let lower = generation.to_lowercase();
    let contained: Vec<usize> = choices
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.trim().is_empty() && lower.contains(&c.to_lowercase()))
        .map(|(i, _)| i)
        .collect();
    if let [only] = contained[..] {
        return Extraction { index: Some(only), rule: Some(ExtractRule::TextMatch) };
    }

    let gen_tokens = token_set(generation);
    if gen_tokens.is_empty() {
        return Extraction::ABSTAIN;
    }
    let overlaps: Vec<f64> = choices
        .iter()
        .map(|c| {
            let ct = token_set(c);
            let union = ct.union(&gen_tokens).count();
            if union == 0 {
                0.0
            } else {
                ct.intersection(&gen_tokens).count() as f64 / union as f64
            }
        })
        .collect();
    if let Some(best) = argmax(&overlaps) {
        let top = overlaps[best];
        let unique = overlaps.iter().filter(|&&o| o == top).count() == 1;
        if top >= OVERLAP_THRESHOLD && unique {
            return Extraction { index: Some(best), rule: Some(ExtractRule::TokenOverlap) };
        }
    }
    Extraction::ABSTAIN
}

/// User message for generation mode: the question, then lettered choices.
pub fn render_generation_prompt(item: &BenchmarkItem, with_choices: bool) -> String {
    let mut out = format!("Question: {}\n", item.question);
    if with_choices {
        for (i, c) in item.choices.iter().enumerate() {
            out.push_str(&format!("{}. {}\n", choice_letter(i), c));
        }
    }
    out.push_str("Answer:");
    out
}

pub fn generation_request(item: &BenchmarkItem, system_prompt: &str, with_choices: bool, max_tokens: u32, stop: &[String]) -> ChatRequest {
    let mut req = ChatRequest::user(render_generation_prompt(item, with_choices));
    if !system_prompt.is_empty() {
        req.system_instruction = Some(system_prompt.to_owned());
    }
    req.temperature = 0.0;
    req.max_tokens = max_tokens;
    req.stop = stop.to_vec();
    req
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutcome {
    pub generation: String,
    pub refused: bool,
    pub extraction: Extraction,
}

/// Generation mode for one item. Refusals become abstentions.
pub fn run_generate_until(item: &BenchmarkItem, system_prompt: &str, client: &Client) -> Result<GenerationOutcome, LlmError> {
    let req = generation_request(item, system_prompt, true, DEFAULT_MAX_TOKENS, &[DEFAULT_STOP.to_owned()]);
    outcome_from(item, client.chat_complete(&req))
}

pub(crate) fn outcome_from(item: &BenchmarkItem, resp: Result<crate::llm::ChatResponse, LlmError>) -> Result<GenerationOutcome, LlmError> {
    match resp {
        Ok(r) => Ok(GenerationOutcome {
            extraction: extract_choice(&r.text, &item.choices),
            generation: r.text,
            refused: false,
        }),
        Err(LlmError::Refusal(msg)) => Ok(GenerationOutcome {
            generation: msg,
            refused: true,
            extraction: Extraction::ABSTAIN,
        }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::evalkit::task::TaskId;
    use crate::llm::mock::{ContinuationOverride, MockReply};
    use crate::llm::{EndpointConfig, MockBackend, TokenTable};

    fn item(choices: &[&str], gold: usize) -> BenchmarkItem {
        BenchmarkItem {
            task_id: TaskId::ArcChallenge,
            id: "i".into(),
            question: "Which one?".into(),
            choices: choices.iter().map(|s| s.to_string()).collect(),
            gold: Gold::Index(gold),
            category: String::new(),
        }
    }

    fn choices(c: &[&str]) -> Vec<String> {
        c.iter().map(|s| s.to_string()).collect()
    }

    fn client_with(overrides: &[(&str, f64)]) -> Client {
        let mut table = TokenTable::constant(-10.0);
        for (cont, ll) in overrides {
            table.continuations.push(ContinuationOverride {
                context: None,
                continuation: cont.to_string(),
                loglikelihood: *ll,
                greedy: false,
            });
        }
        Client::new(EndpointConfig::default(), Arc::new(MockBackend::with_table(table))).unwrap()
    }

    #[test]
    fn mc_argmax_and_norm() {
        let c = client_with(&[(" A", -1.0), (" B", -2.0)]);
        let o = score_multiple_choice(&item(&["A", "B"], 0), &c).unwrap();
        assert_eq!((o.chosen, o.correct), (0, true));

        let short = "8 bytes!";
        let long = "a much longer forty byte choice text ok!";
        assert_eq!((short.len(), long.len()), (8, 40));
        let it = item(&[short, long], 1);
        // raw: -2 > -6 picks the short choice; per byte: -6/40 > -2/8 picks the long one
        let o = decide_multiple_choice(&it, vec![-2.0, -6.0]);
        assert_eq!((o.chosen, o.correct, o.chosen_norm, o.correct_norm), (0, false, 1, true));
    }

    #[test]
    fn mc_tie_picks_lowest_index() {
        let o = decide_multiple_choice(&item(&["x", "y", "z"], 1), vec![-1.0, -1.0, -1.0]);
        assert_eq!((o.chosen, o.chosen_norm), (0, 0));
    }

    #[test]
    fn mc2_fixtures() {
        let l = |v: &[f64]| v.iter().map(|p| p.ln()).collect::<Vec<_>>();
        let m = mc2_from_loglikelihoods(&l(&[0.2, 0.1]), &l(&[0.3, 0.4])).unwrap();
        assert!((m - 0.3).abs() < 1e-12);
        let m = mc2_from_loglikelihoods(&[-1.0], &[f64::NEG_INFINITY, f64::NEG_INFINITY]).unwrap();
        assert_eq!(m, 1.0);
        assert!(mc2_from_loglikelihoods(&[f64::NEG_INFINITY], &[f64::NEG_INFINITY]).is_none());
    }

    #[test]
    fn mc2_via_client() {
        let c = client_with(&[(" t1", 0.2f64.ln()), (" t2", 0.1f64.ln()), (" f1", 0.3f64.ln()), (" f2", 0.4f64.ln())]);
        let it = BenchmarkItem {
            task_id: TaskId::TruthfulqaMc2,
            id: "t".into(),
            question: "q".into(),
            choices: choices(&["t1", "t2", "f1", "f2"]),
            gold: Gold::TrueFalse { true_answers: choices(&["t1", "t2"]), false_answers: choices(&["f1", "f2"]) },
            category: String::new(),
        };
        assert!((score_truthfulqa_mc2(&it, &c).unwrap().mc2 - 0.3).abs() < 1e-12);
    }

    #[test]
    fn extraction_rules() {
        let abc = choices(&["red apple", "green pear", "blue plum"]);
        assert_eq!(extract_choice("The answer is (B)", &abc).index, Some(1));
        assert_eq!(extract_choice("(A)", &abc), Extraction { index: Some(0), rule: Some(ExtractRule::Letter) });
        assert_eq!(extract_choice("C) blue plum", &abc).index, Some(2));
        assert_eq!(extract_choice("B.", &abc).index, Some(1));
        assert_eq!(extract_choice("the answer is c", &abc).index, None);
        assert_eq!(extract_choice("I think the answer is C", &abc).index, Some(2));
        assert_eq!(extract_choice("(D)", &abc), Extraction::ABSTAIN);
        assert_eq!(extract_choice("I would say Blue Plum.", &abc), Extraction { index: Some(2), rule: Some(ExtractRule::TextMatch) });
        assert_eq!(extract_choice("", &abc), Extraction::ABSTAIN);
        assert_eq!(extract_choice("nothing here", &abc), Extraction::ABSTAIN);
        // both texts present, overlap below threshold
        assert_eq!(extract_choice("red apple or green pear", &abc), Extraction::ABSTAIN);
        let long = choices(&["the quick brown fox jumps", "a lazy dog sleeps"]);
        assert_eq!(
            extract_choice("quick brown fox jumps the", &long),
            Extraction { index: Some(0), rule: Some(ExtractRule::TokenOverlap) }
        );
    }

    #[test]
    fn generate_until_letters_and_refusals() {
        let it = item(&["one", "two", "three"], 1);
        let req = generation_request(&it, "sys", true, DEFAULT_MAX_TOKENS, &[DEFAULT_STOP.to_owned()]);
        let mock = MockBackend::new();
        mock.add_reply(&req.digest(), MockReply::text("The answer is (B)"));
        let c = Client::new(EndpointConfig::default(), Arc::new(mock)).unwrap();
        let o = run_generate_until(&it, "sys", &c).unwrap();
        assert_eq!(o.extraction.index, Some(1));
        assert_eq!(req.messages[0].content, "Question: Which one?\nA. one\nB. two\nC. three\nAnswer:");

        let mock = MockBackend::new();
        mock.add_reply(&req.digest(), MockReply::refusal("no"));
        let c = Client::new(EndpointConfig::default(), Arc::new(mock)).unwrap();
        let o = run_generate_until(&it, "sys", &c).unwrap();
        assert!(o.refused);
        assert_eq!(o.extraction, Extraction::ABSTAIN);
    }

    proptest! {
        #[test]
        fn argmax_invariant_under_monotone_transform(lls in proptest::collection::vec(-50.0f64..0.0, 2..6), a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let n = lls.len();
            let names: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
            let it = BenchmarkItem { choices: names, ..item(&["x", "y"], 0) };
            let base = decide_multiple_choice(&it, lls.clone()).chosen;
            let transformed: Vec<f64> = lls.iter().map(|x| a * x + b).collect();
            prop_assert_eq!(decide_multiple_choice(&it, transformed).chosen, base);
            let cubed: Vec<f64> = lls.iter().map(|x| x.powi(3)).collect();
            prop_assert_eq!(decide_multiple_choice(&it, cubed).chosen, base);
        }

        #[test]
        fn mc2_bounds_shift_and_swap(
            t in proptest::collection::vec(-30.0f64..0.0, 1..6),
            f in proptest::collection::vec(-30.0f64..0.0, 1..6),
            c in -20.0f64..20.0,
        ) {
            let m = mc2_from_loglikelihoods(&t, &f).unwrap();
            prop_assert!((0.0..=1.0).contains(&m));
            let ts: Vec<f64> = t.iter().map(|x| x + c).collect();
            let fs: Vec<f64> = f.iter().map(|x| x + c).collect();
            prop_assert!((mc2_from_loglikelihoods(&ts, &fs).unwrap() - m).abs() < 1e-12);
            prop_assert!((mc2_from_loglikelihoods(&f, &t).unwrap() + m - 1.0).abs() < 1e-12);
        }

        #[test]
        fn extraction_in_range(g in ".{0,40}", n in 2usize..6) {
            let cs: Vec<String> = (0..n).map(|i| format!("option {i}")).collect();
            if let Some(i) = extract_choice(&g, &cs).index {
                prop_assert!(i < n);
            }
        }
    }
}
