//! Necessity and sufficiency from a labeled perturbation corpus.
//!
//! For token `i`, with `y` the base label and `k_s` the size of the perturbed
//! subset of instance `s`:
//!
//! ```text
//! N_i = sum_{s: i in S_s} (1/k_s) [f(c_s) != y]     / sum_{s: i in S_s} (1/k_s)
//! S_i = sum_{s: i not in S_s} (1/(n-k_s)) [f(c_s) = y] / sum_{s: i not in S_s} (1/(n-k_s))
//! ```
//!
//! Counts are tallied per subset size first, so the weighted sums are formed
//! in a fixed order regardless of corpus order or partitioning.

pub mod oracle;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::Label;
use crate::sampler::{NeighborhoodConfig, SampleSpec};
use crate::scalar::Scalar;
use crate::text::TokenizedDoc;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EstimateError {
    #[error("explanations are defined for the positive class only")]
    WrongBaseLabel,
    #[error("perturbation corpus is empty")]
    EmptyCorpus,
    #[error("instance {instance} perturbs token {index}, document has {n}")]
    IndexOutOfRange { instance: usize, index: usize, n: usize },
    #[error("instance {instance} perturbs {k} of {n} tokens outside the baseline pool")]
    InvalidSubset { instance: usize, k: usize, n: usize },
    #[error("baseline subtraction requested but the corpus has no full-set instances")]
    MissingBaseline,
    #[error("brute-force oracle limited to {max} {what}, got {got}")]
    TooLarge { what: &'static str, got: usize, max: usize },
    #[error("oracle lexicon entry {0:?} violates the infill length bounds")]
    NonConformingLexicon(String),
    #[error("backend failure in oracle: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Infill,
    MaskToken,
    FullSetBaseline,
}

/// One intervention before prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perturbation {
    pub spec: SampleSpec,
    pub text: String,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbedInstance {
    pub spec: SampleSpec,
    pub text: String,
    pub label: Label,
    pub source: Source,
}

impl PerturbedInstance {
    pub fn labeled(p: Perturbation, label: Label) -> Self {
        Self {
            spec: p.spec,
            text: p.text,
            label,
            source: p.source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore<T> {
    /// Absent when no instance perturbed the token.
    pub necessity: Option<T>,
    /// Absent when no instance kept the token.
    pub sufficiency: Option<T>,
    pub nec_count: usize,
    pub suff_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet<T> {
    pub base_label: Label,
    pub tokens: Vec<TokenScore<T>>,
    pub baseline_value: Option<T>,
}

impl<T: Scalar> ScoreSet<T> {
    pub fn necessity(&self, i: usize) -> Option<&T> {
        self.tokens.get(i).and_then(|t| t.necessity.as_ref())
    }

    pub fn sufficiency(&self, i: usize) -> Option<&T> {
        self.tokens.get(i).and_then(|t| t.sufficiency.as_ref())
    }

    pub fn to_f64(&self) -> ScoreSet<f64> {
        ScoreSet {
            base_label: self.base_label,
            tokens: self
                .tokens
                .iter()
                .map(|t| TokenScore {
                    necessity: t.necessity.as_ref().map(Scalar::as_f64),
                    sufficiency: t.sufficiency.as_ref().map(Scalar::as_f64),
                    nec_count: t.nec_count,
                    suff_count: t.suff_count,
                })
                .collect(),
            baseline_value: self.baseline_value.as_ref().map(Scalar::as_f64),
        }
    }
}

/// Per-token tallies indexed by subset size.
struct Tally {
    nec_total: Vec<usize>,
    nec_flip: Vec<usize>,
    suff_total: Vec<usize>,
    suff_keep: Vec<usize>,
}

fn weighted_ratio<T: Scalar>(hits: &[usize], totals: &[usize], weight: impl Fn(usize) -> T) -> Option<T> {
    let mut num = T::zero();
    let mut den = T::zero();
    for (k, (&h, &t)) in hits.iter().zip(totals).enumerate() {
        if t == 0 {
            continue;
        }
        let w = weight(k);
        num = num + w.clone() * T::from_count(h);
        den = den + w * T::from_count(t);
    }
    if den == T::zero() {
        None
    } else {
        Some(num / den)
    }
}

pub fn score<T: Scalar>(
    doc: &TokenizedDoc,
    corpus: &[PerturbedInstance],
    base_label: Label,
    cfg: &NeighborhoodConfig,
) -> Result<ScoreSet<T>, EstimateError> {
    if base_label != Label::Positive {
        return Err(EstimateError::WrongBaseLabel);
    }
    let n = doc.n();
    let mut tallies: Vec<Tally> = (0..n)
        .map(|_| Tally {
            nec_total: vec![0; n + 1],
            nec_flip: vec![0; n + 1],
            suff_total: vec![0; n + 1],
            suff_keep: vec![0; n + 1],
        })
        .collect();
    let mut baseline_total = 0usize;
    let mut baseline_keep = 0usize;
    let mut scored = 0usize;

    for (idx, inst) in corpus.iter().enumerate() {
        if let Some(&index) = inst.spec.subset.iter().next_back().filter(|&&i| i >= n) {
            return Err(EstimateError::IndexOutOfRange { instance: idx, index, n });
        }
        let kept_label = inst.label == base_label;
        if inst.source == Source::FullSetBaseline {
            baseline_total += 1;
            baseline_keep += usize::from(kept_label);
            continue;
        }
        let k = inst.spec.k();
        if k == 0 || k >= n {
            return Err(EstimateError::InvalidSubset { instance: idx, k, n });
        }
        scored += 1;
        for (i, tally) in tallies.iter_mut().enumerate() {
            if inst.spec.subset.contains(&i) {
                tally.nec_total[k] += 1;
                tally.nec_flip[k] += usize::from(!kept_label);
            } else {
                tally.suff_total[k] += 1;
                tally.suff_keep[k] += usize::from(kept_label);
            }
        }
    }
    if scored == 0 {
        return Err(EstimateError::EmptyCorpus);
    }

    let baseline_value = (baseline_total > 0).then(|| T::from_count(baseline_keep) / T::from_count(baseline_total));
    if cfg.baseline_subtraction && baseline_value.is_none() {
        return Err(EstimateError::MissingBaseline);
    }

    let inv = |d: usize| T::one() / T::from_count(d);
    let tokens = tallies
        .iter()
        .map(|t| {
            let necessity = weighted_ratio(&t.nec_flip, &t.nec_total, inv);
            let mut sufficiency = weighted_ratio(&t.suff_keep, &t.suff_total, |k| inv(n - k));
            if cfg.baseline_subtraction {
                let base = baseline_value.clone().expect("checked above");
                sufficiency = sufficiency.map(|s| (s - base).clamp_unit());
            }
            TokenScore {
                necessity,
                sufficiency,
                nec_count: t.nec_total.iter().sum(),
                suff_count: t.suff_total.iter().sum(),
            }
        })
        .collect();

    Ok(ScoreSet {
        base_label,
        tokens,
        baseline_value,
    })
}
