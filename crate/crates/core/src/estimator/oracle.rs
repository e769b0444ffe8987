//! Exhaustive reference for the estimator.
//!
//! Enumerates every non-empty strict subset and every assignment of lexicon
//! entries to its mask slots, weighting each outcome by its probability under
//! the configured size law (subset uniform given its size, entries uniform
//! per slot). The weighted sums are then taken directly over that space, so
//! the result is the limit a drawn plan converges to. Texts are assembled
//! here without going through the masking or splicing code.

use crate::backends::{Label, Predictor};
use crate::sampler::{NeighborhoodConfig, ScoringMode};
use crate::scalar::Scalar;
use crate::text::TokenizedDoc;

use super::{EstimateError, ScoreSet, TokenScore};

pub const MAX_ORACLE_TOKENS: usize = 6;
pub const MAX_ORACLE_LEXICON: usize = 8;

struct Outcome {
    mask: u32,
    k: usize,
    slots: usize,
    text: String,
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, j| acc * (n - j) / (j + 1))
}

/// Start index of each masked run in `mask` (or every masked index when
/// consecutive masks are not merged).
fn slot_starts(mask: u32, n: usize, merge: bool) -> Vec<usize> {
    (0..n)
        .filter(|&i| mask & (1 << i) != 0 && (!merge || i == 0 || mask & (1 << (i - 1)) == 0))
        .collect()
}

fn assemble(doc: &TokenizedDoc, mask: u32, merge: bool, fills: &[&str]) -> String {
    let mut out = String::new();
    let mut next_fill = fills.iter();
    for (i, tok) in doc.tokens.iter().enumerate() {
        let masked = mask & (1 << i) != 0;
        let continues_run = merge && i > 0 && mask & (1 << (i - 1)) != 0;
        if !masked {
            out.push_str(&tok.leading_sep);
            out.push_str(&tok.surface);
        } else if !continues_run {
            out.push_str(&tok.leading_sep);
            out.push_str(next_fill.next().expect("one fill per slot"));
        }
    }
    out.push_str(&doc.trailing_sep);
    out
}

fn assignments(l: usize, slots: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = l.pow(slots as u32);
    (0..total).map(move |mut code| {
        (0..slots)
            .map(|_| {
                let d = code % l;
                code /= l;
                d
            })
            .collect()
    })
}

/// Exact neighborhood-weighted scores for a small document.
pub fn brute_force_score<T: Scalar>(
    doc: &TokenizedDoc,
    predictor: &dyn Predictor,
    lexicon: &[String],
    cfg: &NeighborhoodConfig,
) -> Result<ScoreSet<T>, EstimateError> {
    let n = doc.n();
    if n > MAX_ORACLE_TOKENS {
        return Err(EstimateError::TooLarge { what: "tokens", got: n, max: MAX_ORACLE_TOKENS });
    }
    if n < 2 {
        return Err(EstimateError::EmptyCorpus);
    }
    let lexicon: Vec<String> = match cfg.scoring_mode {
        ScoringMode::MaskToken => vec![cfg.mask_token.clone()],
        ScoringMode::Infill => lexicon.to_vec(),
    };
    if lexicon.is_empty() || lexicon.len() > MAX_ORACLE_LEXICON {
        return Err(EstimateError::TooLarge { what: "lexicon entries", got: lexicon.len(), max: MAX_ORACLE_LEXICON });
    }
    if let Some(bad) = lexicon.iter().find(|e| {
        let len = e.split_whitespace().count();
        len < cfg.infill_len_min || len > cfg.infill_len_max
    }) {
        return Err(EstimateError::NonConformingLexicon(bad.clone()));
    }
    let backend = |e: crate::backends::BackendError| EstimateError::Backend(e.to_string());

    let base = predictor.predict_one(&doc.original_text).map_err(backend)?;
    if base != Label::Positive {
        return Err(EstimateError::WrongBaseLabel);
    }
    let size_weights = cfg
        .size_law
        .weights(n)
        .map_err(|e| EstimateError::Backend(e.to_string()))?;

    let full: u32 = (1 << n) - 1;
    let mut outcomes = Vec::new();
    for mask in 1..full {
        let k = mask.count_ones() as usize;
        let slots = slot_starts(mask, n, cfg.merge_consecutive).len();
        for a in assignments(lexicon.len(), slots) {
            let fills: Vec<&str> = a.iter().map(|&d| lexicon[d].as_str()).collect();
            outcomes.push(Outcome {
                mask,
                k,
                slots,
                text: assemble(doc, mask, cfg.merge_consecutive, &fills),
            });
        }
    }
    let baseline_texts: Vec<String> = if cfg.baseline_subtraction {
        let slots = slot_starts(full, n, cfg.merge_consecutive).len();
        assignments(lexicon.len(), slots)
            .map(|a| {
                let fills: Vec<&str> = a.iter().map(|&d| lexicon[d].as_str()).collect();
                assemble(doc, full, cfg.merge_consecutive, &fills)
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut texts: Vec<String> = outcomes.iter().map(|o| o.text.clone()).collect();
    texts.extend(baseline_texts.iter().cloned());
    let labels = predictor.predict_batch(&texts).map_err(backend)?;
    let (outcome_labels, baseline_labels) = labels.split_at(outcomes.len());

    let total_weight: T = size_weights
        .iter()
        .fold(T::zero(), |acc, w| acc + T::from_weight(*w));
    let l = T::from_count(lexicon.len());

    let mut nec_num = vec![T::zero(); n];
    let mut nec_den = vec![T::zero(); n];
    let mut suff_num = vec![T::zero(); n];
    let mut suff_den = vec![T::zero(); n];
    let mut nec_count = vec![0usize; n];
    let mut suff_count = vec![0usize; n];

    for (o, label) in outcomes.iter().zip(outcome_labels) {
        let p_size = T::from_weight(size_weights[o.k - 1]) / total_weight.clone();
        let mut p = p_size / T::from_count(binomial(n, o.k));
        for _ in 0..o.slots {
            p = p / l.clone();
        }
        if p == T::zero() {
            continue;
        }
        let flipped = *label != base;
        for i in 0..n {
            if o.mask & (1 << i) != 0 {
                let w = p.clone() / T::from_count(o.k);
                nec_den[i] = nec_den[i].clone() + w.clone();
                if flipped {
                    nec_num[i] = nec_num[i].clone() + w;
                }
                nec_count[i] += 1;
            } else {
                let w = p.clone() / T::from_count(n - o.k);
                suff_den[i] = suff_den[i].clone() + w.clone();
                if !flipped {
                    suff_num[i] = suff_num[i].clone() + w;
                }
                suff_count[i] += 1;
            }
        }
    }

    let baseline_value = (!baseline_labels.is_empty()).then(|| {
        let kept = baseline_labels.iter().filter(|&&b| b == base).count();
        T::from_count(kept) / T::from_count(baseline_labels.len())
    });

    let tokens = (0..n)
        .map(|i| {
            let ratio = |num: &T, den: &T| (*den != T::zero()).then(|| num.clone() / den.clone());
            let mut sufficiency = ratio(&suff_num[i], &suff_den[i]);
            if let Some(b) = baseline_value.as_ref() {
                sufficiency = sufficiency.map(|s| (s - b.clone()).clamp_unit());
            }
            TokenScore {
                necessity: ratio(&nec_num[i], &nec_den[i]),
                sufficiency,
                nec_count: nec_count[i],
                suff_count: suff_count[i],
            }
        })
        .collect();

    Ok(ScoreSet {
        base_label: base,
        tokens,
        baseline_value,
    })
}
