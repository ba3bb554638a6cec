use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::distribution::{build_distribution, TokenDistribution, TokenUnit};
use super::MetricError;

/// Additive smoothing constant for KL divergence (Jeffreys prior).
pub const KL_ALPHA: f64 = 0.5;

/// Marginal entropies below this (bits) count as zero; rounding in the
/// marginals otherwise leaves tiny positive values.
const ENTROPY_EPS: f64 = 1e-12;

fn plogp2(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// Shannon entropy in bits.
pub fn shannon_entropy_bits(d: &TokenDistribution) -> f64 {
    -d.support().values().map(|&p| plogp2(p)).sum::<f64>()
}

/// Entropy divided by its maximum `log2(vocab_size)`; 0 for a single token.
pub fn shannon_entropy_normalized(d: &TokenDistribution) -> f64 {
    let v = d.vocab_size();
    if v <= 1 {
        return 0.0;
    }
    (shannon_entropy_bits(d) / (v as f64).log2()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyStats {
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
    pub per_document: Vec<f64>,
}

impl EntropyStats {
    pub fn from_values(per_document: Vec<f64>) -> Self {
        let n = per_document.len() as f64;
        let mean = per_document.iter().sum::<f64>() / n;
        let var = per_document.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            stddev: var.sqrt(),
            per_document,
        }
    }
}

/// Normalized entropy of each document separately, with mean and spread.
pub fn corpus_entropy_stats<T: AsRef<str>>(texts: &[T], unit: TokenUnit) -> Result<EntropyStats, MetricError> {
    if texts.is_empty() {
        return Err(MetricError::Invalid("no documents".into()));
    }
    let per_document = texts
        .iter()
        .map(|t| build_distribution(&[t.as_ref()], unit).map(|d| shannon_entropy_normalized(&d)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EntropyStats::from_values(per_document))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutualInformation {
    /// I(X;Y) / min(H(X), H(Y)).
    pub normalized: f64,
    pub bits: f64,
    pub entropy_x_bits: f64,
    pub entropy_y_bits: f64,
}

/// Interns tokens to dense ids.
#[derive(Default)]
struct Vocab {
    ids: HashMap<String, usize>,
}

impl Vocab {
    fn id(&mut self, tok: &str) -> usize {
        let next = self.ids.len();
        *self.ids.entry(tok.to_owned()).or_insert(next)
    }

    fn len(&self) -> usize {
        self.ids.len()
    }
}

/// Mutual information between paired documents.
///
/// Each pair contributes the outer product of its two per-document token
/// distributions, pairs weighted equally; marginals come from the joint.
/// The joint is processed one X-token row at a time so memory stays
/// proportional to the Y vocabulary.
pub fn mutual_information<A: AsRef<str>, B: AsRef<str>>(
    pairs: &[(A, B)],
    unit: TokenUnit,
) -> Result<MutualInformation, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::Invalid("no document pairs".into()));
    }
    let w = 1.0 / pairs.len() as f64;
    let mut vx = Vocab::default();
    let mut vy = Vocab::default();
    let mut sides: Vec<(Vec<(usize, f64)>, Vec<(usize, f64)>)> = Vec::with_capacity(pairs.len());
    for (i, (a, b)) in pairs.iter().enumerate() {
        let estimate = |t: &str| {
            build_distribution(&[t], unit).map_err(|_| {
                MetricError::Invalid(format!("pair {i} has a side with no tokens"))
            })
        };
        let da = estimate(a.as_ref())?;
        let db = estimate(b.as_ref())?;
        let xa = da.support().iter().map(|(t, &p)| (vx.id(t), p)).collect();
        let yb = db.support().iter().map(|(t, &p)| (vy.id(t), p)).collect();
        sides.push((xa, yb));
    }

    let mut px = vec![0.0; vx.len()];
    let mut py = vec![0.0; vy.len()];
    // pairs containing each x token, with p_i(x)
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); vx.len()];
    for (i, (xs, ys)) in sides.iter().enumerate() {
        for &(x, p) in xs {
            px[x] += w * p;
            rows[x].push((i, p));
        }
        for &(y, q) in ys {
            py[y] += w * q;
        }
    }

    let hx = -px.iter().map(|&p| plogp2(p)).sum::<f64>();
    let hy = -py.iter().map(|&p| plogp2(p)).sum::<f64>();

    // I = sum_xy J log2( J / (px py) )
    let mut bits = 0.0;
    let mut row = vec![0.0; vy.len()];
    let mut touched: Vec<usize> = Vec::new();
    for (x, pairs_with_x) in rows.iter().enumerate() {
        for &(i, p) in pairs_with_x {
            for &(y, q) in &sides[i].1 {
                if row[y] == 0.0 {
                    touched.push(y);
                }
                row[y] += w * p * q;
            }
        }
        for &y in &touched {
            let j = row[y];
            bits += j * (j / (px[x] * py[y])).log2();
            row[y] = 0.0;
        }
        touched.clear();
    }
    let bits = bits.max(0.0);
    let denom = hx.min(hy);
    let normalized = if denom <= ENTROPY_EPS {
        0.0
    } else {
        (bits / denom).clamp(0.0, 1.0)
    };
    Ok(MutualInformation {
        normalized,
        bits,
        entropy_x_bits: hx,
        entropy_y_bits: hy,
    })
}

pub fn mutual_information_normalized<A: AsRef<str>, B: AsRef<str>>(
    pairs: &[(A, B)],
    unit: TokenUnit,
) -> Result<f64, MetricError> {
    mutual_information(pairs, unit).map(|mi| mi.normalized)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlDivergence {
    pub raw_nats: f64,
    /// 1 - exp(-raw_nats)
    pub normalized: f64,
}

/// Add-`alpha` re-estimate of `d` over `union`, using pseudo-counts
/// `p * total_count`.
fn smoothed(d: &TokenDistribution, union: &[&str], alpha: f64) -> Vec<f64> {
    let n = d.total_count() as f64;
    let denom = n + alpha * union.len() as f64;
    union
        .iter()
        .map(|t| (d.prob(t) * n + alpha) / denom)
        .collect()
}

/// D_KL(p || q) in nats after add-`alpha` smoothing of both sides over the
/// union vocabulary.
pub fn kl_divergence_with_alpha(
    p: &TokenDistribution,
    q: &TokenDistribution,
    alpha: f64,
) -> Result<KlDivergence, MetricError> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(MetricError::Invalid(format!("alpha must be >= 0, got {alpha}")));
    }
    let union: Vec<&str> = p
        .support()
        .keys()
        .chain(q.support().keys())
        .map(String::as_str)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let ps = smoothed(p, &union, alpha);
    let qs = smoothed(q, &union, alpha);
    let mut raw = 0.0;
    for (i, (&pi, &qi)) in ps.iter().zip(&qs).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(MetricError::Invalid(format!(
                "q has no mass on {:?}; use alpha > 0",
                union[i]
            )));
        }
        raw += pi * (pi / qi).ln();
    }
    let raw_nats = raw.max(0.0);
    Ok(KlDivergence {
        raw_nats,
        normalized: 1.0 - (-raw_nats).exp(),
    })
}

pub fn kl_divergence_normalized(p: &TokenDistribution, q: &TokenDistribution) -> KlDivergence {
    kl_divergence_with_alpha(p, q, KL_ALPHA).expect("smoothed q has full support")
}

/// Convenience for tests and reports: distribution from explicit masses.
pub fn distribution_from(unit: TokenUnit, masses: &[(&str, f64)], total_count: u64) -> Result<TokenDistribution, MetricError> {
    let probs: BTreeMap<String, f64> = masses.iter().map(|(t, p)| (t.to_string(), *p)).collect();
    TokenDistribution::from_probabilities(unit, probs, total_count)
}
