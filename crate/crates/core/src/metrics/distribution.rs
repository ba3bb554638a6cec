use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TokenUnit {
    #[default]
    Word,
    Char,
}

impl fmt::Display for TokenUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenUnit::Word => "word",
            TokenUnit::Char => "char",
        })
    }
}

impl FromStr for TokenUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "word" => Ok(TokenUnit::Word),
            "char" => Ok(TokenUnit::Char),
            other => Err(format!("unknown token unit {other:?} (word|char)")),
        }
    }
}

/// Lowercased whitespace-separated words with leading and trailing
/// non-alphanumeric characters removed; empty results are dropped.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
}

pub fn tokenize(text: &str, unit: TokenUnit) -> Vec<String> {
    match unit {
        TokenUnit::Word => words(text).collect(),
        TokenUnit::Char => text.chars().map(String::from).collect(),
    }
}

/// Empirical token distribution. Every listed token has positive mass.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    unit: TokenUnit,
    support: BTreeMap<String, f64>,
    total_count: u64,
}

impl TokenDistribution {
    pub fn from_counts(unit: TokenUnit, counts: &BTreeMap<String, u64>) -> Result<Self, MetricError> {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(MetricError::EmptySupport);
        }
        let support = counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(t, &c)| (t.clone(), c as f64 / total as f64))
            .collect();
        Ok(Self {
            unit,
            support,
            total_count: total,
        })
    }

    /// Explicit probabilities, renormalized to sum to one. `total_count` is
    /// the sample size the probabilities are taken to come from; smoothing
    /// uses it to recover pseudo-counts.
    pub fn from_probabilities(
        unit: TokenUnit,
        probs: BTreeMap<String, f64>,
        total_count: u64,
    ) -> Result<Self, MetricError> {
        if total_count == 0 {
            return Err(MetricError::Invalid("total_count must be positive".into()));
        }
        if probs.values().any(|&p| !(p.is_finite() && p >= 0.0)) {
            return Err(MetricError::Invalid("probabilities must be finite and >= 0".into()));
        }
        let support: BTreeMap<String, f64> = probs.into_iter().filter(|(_, p)| *p > 0.0).collect();
        let sum: f64 = support.values().sum();
        if support.is_empty() || sum <= 0.0 {
            return Err(MetricError::EmptySupport);
        }
        let support = support.into_iter().map(|(t, p)| (t, p / sum)).collect();
        Ok(Self {
            unit,
            support,
            total_count,
        })
    }

    pub fn unit(&self) -> TokenUnit {
        self.unit
    }

    pub fn support(&self) -> &BTreeMap<String, f64> {
        &self.support
    }

    pub fn prob(&self, token: &str) -> f64 {
        self.support.get(token).copied().unwrap_or(0.0)
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    pub fn vocab_size(&self) -> usize {
        self.support.len()
    }
}

/// Maximum-likelihood token frequencies pooled over `texts`.
pub fn build_distribution<T: AsRef<str>>(texts: &[T], unit: TokenUnit) -> Result<TokenDistribution, MetricError> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for text in texts {
        for tok in tokenize(text.as_ref(), unit) {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    TokenDistribution::from_counts(unit, &counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(d: &TokenDistribution) -> Vec<(&str, f64)> {
        d.support().iter().map(|(k, v)| (k.as_str(), *v)).collect()
    }

    #[test]
    fn word_counting() {
        let d = build_distribution(&["a a b"], TokenUnit::Word).unwrap();
        assert_eq!(probs(&d), vec![("a", 2.0 / 3.0), ("b", 1.0 / 3.0)]);
        assert_eq!(d.total_count(), 3);
        let d = build_distribution(&["A a"], TokenUnit::Word).unwrap();
        assert_eq!(probs(&d), vec![("a", 1.0)]);
        let d = build_distribution(&["\"Hello,\" (world)!"], TokenUnit::Word).unwrap();
        assert_eq!(d.vocab_size(), 2);
        assert!(d.prob("hello") > 0.0);
    }

    #[test]
    fn char_counting() {
        let d = build_distribution(&["ab"], TokenUnit::Char).unwrap();
        assert_eq!(probs(&d), vec![("a", 0.5), ("b", 0.5)]);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(
            build_distribution(&["", " ... "], TokenUnit::Word),
            Err(MetricError::EmptySupport)
        ));
        let none: [&str; 0] = [];
        assert!(build_distribution(&none, TokenUnit::Char).is_err());
    }

    #[test]
    fn probabilities_sum_to_one() {
        let d = build_distribution(&["the quick brown fox jumps over the lazy dog the end"], TokenUnit::Word)
            .unwrap();
        let sum: f64 = d.support().values().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(d.support().values().all(|&p| p > 0.0));
    }
}
