//! Intervention subsets for the necessity/sufficiency neighborhoods.
//!
//! A single pool of subsets serves both scores: a subset of size `k`
//! contributes necessity evidence to its `k` members and sufficiency evidence
//! to the `n - k` tokens it leaves intact. The pool is sized so that each token
//! is expected to appear on both sides at least `target_per_token` times.

use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text::{TokenizedDoc, DEFAULT_MASK_TOKEN};

/// Largest document `enumerate_plan` accepts.
pub const MAX_ENUMERABLE_TOKENS: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("document has {n} tokens; at least 2 are needed")]
    TooShort { n: usize },
    #[error("document has {n} tokens; enumeration is limited to {max}")]
    TooLarge { n: usize, max: usize },
    #[error("invalid neighborhood config: {0}")]
    InvalidConfig(String),
}

/// Law of the subset size `k`, supported on `1..=n-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SizeLaw {
    #[default]
    Uniform,
    /// Always perturb exactly `k` tokens.
    Fixed(usize),
    /// Relative weights for `k = 1, 2, ...`; entries beyond `n - 1` are ignored.
    Weights(Vec<f64>),
}

impl SizeLaw {
    /// Unnormalized weights for `k = 1..=n-1` (index `k - 1`).
    pub fn weights(&self, n: usize) -> Result<Vec<f64>, SamplerError> {
        if n < 2 {
            return Err(SamplerError::TooShort { n });
        }
        let max_k = n - 1;
        let w = match self {
            SizeLaw::Uniform => vec![1.0; max_k],
            SizeLaw::Fixed(k) => {
                if *k == 0 || *k > max_k {
                    return Err(SamplerError::InvalidConfig(format!(
                        "fixed subset size {k} outside 1..={max_k}"
                    )));
                }
                (1..=max_k).map(|j| if j == *k { 1.0 } else { 0.0 }).collect()
            }
            SizeLaw::Weights(ws) => {
                let mut w: Vec<f64> = ws.iter().copied().take(max_k).collect();
                w.resize(max_k, 0.0);
                if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(SamplerError::InvalidConfig("size weights must be finite and >= 0".into()));
                }
                w
            }
        };
        if w.iter().sum::<f64>() <= 0.0 {
            return Err(SamplerError::InvalidConfig(format!("no size mass on 1..={max_k}")));
        }
        Ok(w)
    }

    /// Mean subset size for a document of `n` tokens.
    pub fn mean(&self, n: usize) -> Result<f64, SamplerError> {
        let w = self.weights(n)?;
        let total: f64 = w.iter().sum();
        Ok(w.iter().enumerate().map(|(j, x)| (j + 1) as f64 * x).sum::<f64>() / total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// Replace masked spans with generated n-grams.
    #[default]
    Infill,
    /// Leave the mask sentinel in place.
    MaskToken,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodConfig {
    pub target_per_token: usize,
    pub size_law: SizeLaw,
    pub infill_len_min: usize,
    pub infill_len_max: usize,
    pub seed: u64,
    pub merge_consecutive: bool,
    pub scoring_mode: ScoringMode,
    pub baseline_subtraction: bool,
    /// Full-set perturbations drawn for the baseline; defaults to `target_per_token`.
    pub baseline_pool: Option<usize>,
    pub mask_token: String,
}

impl Default for NeighborhoodConfig {
    fn default() -> Self {
        Self {
            target_per_token: 100,
            size_law: SizeLaw::Uniform,
            infill_len_min: 1,
            infill_len_max: 7,
            seed: 0,
            merge_consecutive: true,
            scoring_mode: ScoringMode::Infill,
            baseline_subtraction: false,
            baseline_pool: None,
            mask_token: DEFAULT_MASK_TOKEN.to_string(),
        }
    }
}

impl NeighborhoodConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.target_per_token == 0 {
            return Err(SamplerError::InvalidConfig("target_per_token must be >= 1".into()));
        }
        if self.infill_len_min == 0 || self.infill_len_min > self.infill_len_max {
            return Err(SamplerError::InvalidConfig(format!(
                "infill length bounds {}..={} invalid",
                self.infill_len_min, self.infill_len_max
            )));
        }
        if self.mask_token.is_empty() || self.mask_token.chars().any(char::is_whitespace) {
            return Err(SamplerError::InvalidConfig("mask token must be a single non-empty unit".into()));
        }
        Ok(())
    }

    /// Number of full-set perturbations backing the sufficiency baseline.
    pub fn baseline_size(&self) -> usize {
        if self.baseline_subtraction {
            self.baseline_pool.unwrap_or(self.target_per_token)
        } else {
            0
        }
    }

    /// Stable hex digest of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub subset: BTreeSet<usize>,
}

impl SampleSpec {
    pub fn new(subset: BTreeSet<usize>) -> Self {
        Self { subset }
    }

    pub fn k(&self) -> usize {
        self.subset.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub doc_id: String,
    pub subsets: Vec<SampleSpec>,
    pub seed_used: u64,
}

/// Mix a base seed with identifying bytes.
pub fn derive_seed(base: u64, parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Content-derived identifier for a document.
pub fn doc_id(doc: &TokenizedDoc) -> String {
    hex::encode(&Sha256::digest(doc.original_text.as_bytes())[..8])
}

/// Subsets needed so that expected necessity coverage `m E[k] / n` and
/// expected sufficiency coverage `m (n - E[k]) / n` both reach the target.
pub fn required_samples(n: usize, cfg: &NeighborhoodConfig) -> Result<usize, SamplerError> {
    if n < 2 {
        return Err(SamplerError::TooShort { n });
    }
    cfg.validate()?;
    let mean_k = cfg.size_law.mean(n)?;
    let bottleneck = mean_k.min(n as f64 - mean_k);
    let m = (cfg.target_per_token as f64 * n as f64 / bottleneck - 1e-9).ceil();
    Ok(m.max(1.0) as usize)
}

pub fn draw_plan(doc: &TokenizedDoc, cfg: &NeighborhoodConfig) -> Result<SamplePlan, SamplerError> {
    draw_plan_with_id(doc, cfg, &doc_id(doc))
}

/// Draw a plan with the per-document seed derived from `cfg.seed` and `id`.
pub fn draw_plan_with_id(doc: &TokenizedDoc, cfg: &NeighborhoodConfig, id: &str) -> Result<SamplePlan, SamplerError> {
    let n = doc.n();
    let m = required_samples(n, cfg)?;
    let sizes = WeightedIndex::new(cfg.size_law.weights(n)?)
        .map_err(|e| SamplerError::InvalidConfig(e.to_string()))?;
    let seed_used = derive_seed(cfg.seed, &[b"plan", id.as_bytes()]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed_used);

    let subsets = (0..m)
        .map(|_| {
            let k = sizes.sample(&mut rng) + 1;
            let subset = rand::seq::index::sample(&mut rng, n, k).into_iter().collect();
            SampleSpec { subset }
        })
        .collect();

    Ok(SamplePlan {
        doc_id: id.to_string(),
        subsets,
        seed_used,
    })
}

/// All non-empty strict subsets with at most `max_size` members, ordered by
/// size and then lexicographically.
pub fn enumerate_plan(doc: &TokenizedDoc, max_size: usize) -> Result<SamplePlan, SamplerError> {
    let n = doc.n();
    if n > MAX_ENUMERABLE_TOKENS {
        return Err(SamplerError::TooLarge { n, max: MAX_ENUMERABLE_TOKENS });
    }
    let full: u32 = (1u32 << n) - 1;
    let mut masks: Vec<u32> = (1..full)
        .filter(|m| m.count_ones() as usize <= max_size)
        .collect();
    let key = |m: &u32| -> (u32, Vec<usize>) {
        (m.count_ones(), (0..n).filter(|i| m & (1 << i) != 0).collect())
    };
    masks.sort_by_key(key);
    let subsets = masks
        .into_iter()
        .map(|m| SampleSpec {
            subset: (0..n).filter(|i| m & (1 << i) != 0).collect(),
        })
        .collect();
    Ok(SamplePlan {
        doc_id: doc_id(doc),
        subsets,
        seed_used: 0,
    })
}
