//! Functional-suite evaluation.
//!
//! A suite is expanded into cases, the explicit cases are perturbed once into
//! a [`CorpusStore`], and any number of classifiers are then evaluated against
//! that same store. Each evaluation yields positive-prediction rates per
//! (functionality, identity) and the distribution of necessity/sufficiency at
//! the identity token over explicit cases the classifier got right.

mod store;
mod suite;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use store::{CorpusManifest, CorpusRecord, CorpusStore, STORE_FORMAT};
pub use suite::{expand, ExpandedCase, FunctionalSuite, Functionality, Gold, BUNDLED_SUITE, IDENTITY_PLACEHOLDER};

use crate::backends::{BackendError, InfillDiagnostics, Infiller, Label, Predictor};
use crate::estimator::{score, EstimateError, PerturbedInstance};
use crate::explain::{perturb, ExplainError};
use crate::sampler::{required_samples, NeighborhoodConfig, SamplerError};
use crate::text::tokenize;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("suite schema error: {0}")]
    SuiteSchema(String),
    #[error("cannot locate identity {identity:?} after substituting into {template:?}")]
    PlaceholderResolution { template: String, identity: String },
    #[error("corpus store corrupt: {0}")]
    StoreCorrupt(String),
    #[error("corpus store {path} was built with a different suite, config or infiller")]
    ManifestMismatch { path: String },
    #[error("case {case} has no perturbations in the corpus")]
    MissingCoverage { case: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Instances expected in the store for a case of `n` tokens.
pub fn expected_instances(n: usize, cfg: &NeighborhoodConfig) -> Result<usize, SamplerError> {
    Ok(required_samples(n, cfg)? + cfg.baseline_size())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub new_instances: usize,
    pub new_cases: usize,
    pub reused_cases: usize,
    pub diagnostics: InfillDiagnostics,
}

/// Perturb every case not yet in `store` and append the results in case order.
pub fn build_corpus(
    cases: &[ExpandedCase],
    infiller: &dyn Infiller,
    cfg: &NeighborhoodConfig,
    store: &mut CorpusStore,
) -> Result<BuildSummary, HarnessError> {
    cfg.validate()?;
    let mut seen = BTreeSet::new();
    let mut todo = Vec::new();
    let mut summary = BuildSummary::default();
    for case in cases {
        if !seen.insert(case.id.as_str()) {
            continue;
        }
        let doc = tokenize(&case.text);
        let expected = expected_instances(doc.n(), cfg)?;
        match store.case_count(&case.id) {
            0 => todo.push((case, doc)),
            c if c == expected => summary.reused_cases += 1,
            c => {
                return Err(HarnessError::StoreCorrupt(format!(
                    "case {} has {c} instances, expected {expected}",
                    case.id
                )))
            }
        }
    }

    let generated = todo
        .par_iter()
        .map(|(case, doc)| perturb(doc, &case.id, infiller, cfg).map(|set| (case.id.as_str(), set)))
        .collect::<Result<Vec<_>, _>>()?;

    for (case, set) in generated {
        summary.diagnostics.merge(&set.diagnostics);
        summary.new_instances += set.perturbations.len();
        summary.new_cases += 1;
        store.append(
            set.perturbations
                .iter()
                .map(|p| CorpusRecord::from_perturbation(case, p))
                .collect(),
        )?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub functionality: String,
    pub identity: Option<String>,
    pub positives: usize,
    pub total: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    pub count: usize,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let count = values.len();
        let mean = values.iter().sum::<f64>() / count as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
        Some(Self {
            mean,
            sd: var.sqrt(),
            count,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub identity: String,
    /// Explicit cases scored (correctly predicted positive).
    pub scored_cases: usize,
    /// Explicit cases left out because the classifier missed them.
    pub excluded_cases: usize,
    pub necessity: Option<MeanSd>,
    pub sufficiency: Option<MeanSd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: String,
    pub functionality: String,
    pub identity: Option<String>,
    pub text: String,
    pub gold: Gold,
    pub predicted: Label,
    pub necessity: Option<f64>,
    pub sufficiency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub classifier: String,
    pub store_hash: String,
    /// Digest of the perturbed texts read from the store, in order.
    pub texts_digest: String,
    pub rates: Vec<RateRow>,
    pub scores: Vec<ScoreRow>,
    pub cases: Vec<CaseResult>,
}

impl SuiteReport {
    /// Pooled positive rate over `functionalities`, optionally restricted to
    /// one identity.
    pub fn pooled_rate(&self, functionalities: &[&str], identity: Option<&str>) -> Option<f64> {
        let (pos, total) = self
            .rates
            .iter()
            .filter(|r| functionalities.contains(&r.functionality.as_str()))
            .filter(|r| identity.is_none() || r.identity.as_deref() == identity)
            .fold((0, 0), |(p, t), r| (p + r.positives, t + r.total));
        (total > 0).then(|| pos as f64 / total as f64)
    }

    pub fn score_row(&self, identity: &str) -> Option<&ScoreRow> {
        self.scores.iter().find(|r| r.identity == identity)
    }
}

/// Predict every case and every stored perturbation, then aggregate.
pub fn evaluate(
    classifier: &str,
    cases: &[ExpandedCase],
    store: &CorpusStore,
    predictor: &dyn Predictor,
    cfg: &NeighborhoodConfig,
) -> Result<SuiteReport, HarnessError> {
    let case_texts: Vec<String> = cases.iter().map(|c| c.text.clone()).collect();
    let case_labels = predictor.predict_batch(&case_texts)?;

    let store_texts: Vec<String> = store.records().iter().map(|r| r.text.clone()).collect();
    let mut digest = Sha256::new();
    for t in &store_texts {
        digest.update((t.len() as u64).to_le_bytes());
        digest.update(t.as_bytes());
    }
    let store_labels = predictor.predict_batch(&store_texts)?;
    if store_labels.len() != store_texts.len() || case_labels.len() != case_texts.len() {
        return Err(BackendError::Protocol("label count does not match text count".into()).into());
    }
    let mut labels_by_case: BTreeMap<&str, Vec<PerturbedInstance>> = BTreeMap::new();
    for (rec, label) in store.records().iter().zip(&store_labels) {
        labels_by_case
            .entry(rec.case.as_str())
            .or_default()
            .push(PerturbedInstance::labeled(rec.to_perturbation(), *label));
    }

    let mut results = Vec::with_capacity(cases.len());
    for (case, &predicted) in cases.iter().zip(&case_labels) {
        let mut result = CaseResult {
            case: case.id.clone(),
            functionality: case.functionality_id.clone(),
            identity: case.identity.clone(),
            text: case.text.clone(),
            gold: case.gold,
            predicted,
            necessity: None,
            sufficiency: None,
        };
        if let (true, Label::Positive, Some(target)) = (case.is_explicit(), predicted, case.target_token_index) {
            let corpus = labels_by_case
                .get(case.id.as_str())
                .ok_or_else(|| HarnessError::MissingCoverage { case: case.id.clone() })?;
            let doc = tokenize(&case.text);
            let scores = score::<f64>(&doc, corpus, Label::Positive, cfg)?;
            result.necessity = scores.necessity(target).copied();
            result.sufficiency = scores.sufficiency(target).copied();
        }
        results.push(result);
    }

    let mut rate_map: BTreeMap<(usize, Option<String>), (String, usize, usize)> = BTreeMap::new();
    let order: BTreeMap<&str, usize> = {
        let mut m = BTreeMap::new();
        for c in cases {
            let next = m.len();
            m.entry(c.functionality_id.as_str()).or_insert(next);
        }
        m
    };
    for r in &results {
        let key = (order[r.functionality.as_str()], r.identity.clone());
        let e = rate_map.entry(key).or_insert((r.functionality.clone(), 0, 0));
        e.1 += usize::from(r.predicted.is_positive());
        e.2 += 1;
    }
    let rates = rate_map
        .into_iter()
        .map(|((_, identity), (functionality, positives, total))| RateRow {
            functionality,
            identity,
            positives,
            total,
            rate: positives as f64 / total as f64,
        })
        .collect();

    let mut identities: Vec<String> = Vec::new();
    for c in cases.iter().filter(|c| c.is_explicit()) {
        if let Some(id) = &c.identity {
            if !identities.contains(id) {
                identities.push(id.clone());
            }
        }
    }
    let scores = identities
        .into_iter()
        .map(|identity| {
            let explicit: Vec<&CaseResult> = results
                .iter()
                .filter(|r| r.gold == Gold::Hateful && r.identity.as_deref() == Some(identity.as_str()))
                .collect();
            let scored: Vec<&&CaseResult> = explicit.iter().filter(|r| r.predicted.is_positive()).collect();
            let nec: Vec<f64> = scored.iter().filter_map(|r| r.necessity).collect();
            let suff: Vec<f64> = scored.iter().filter_map(|r| r.sufficiency).collect();
            ScoreRow {
                scored_cases: scored.len(),
                excluded_cases: explicit.len() - scored.len(),
                necessity: MeanSd::of(&nec),
                sufficiency: MeanSd::of(&suff),
                identity,
            }
        })
        .collect();

    Ok(SuiteReport {
        classifier: classifier.to_string(),
        store_hash: store.content_hash()?,
        texts_digest: hex::encode(digest.finalize()),
        rates,
        scores,
        cases: results,
    })
}

/// Functionalities probing over-sensitivity to identity mentions.
pub const IDENTITY_MENTION_FUNCTIONALITIES: &[&str] = &["F18", "F19"];
/// Functionalities probing abuse against non-protected targets.
pub const NON_PROTECTED_FUNCTIONALITIES: &[&str] = &["F22", "F23", "F24"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRow {
    pub identity: String,
    pub classifier: String,
    pub necessity: Option<f64>,
    pub sufficiency: Option<f64>,
    /// Positive rate on F18/F19 for this identity.
    pub identity_mention_rate: Option<f64>,
    /// Positive rate on F22-F24.
    pub non_protected_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    Less,
    Equal,
    Greater,
}

impl From<Ordering> for Order {
    fn from(o: Ordering) -> Self {
        match o {
            Ordering::Less => Order::Less,
            Ordering::Equal => Order::Equal,
            Ordering::Greater => Order::Greater,
        }
    }
}

fn compare(a: Option<f64>, b: Option<f64>) -> Option<Order> {
    Some(a?.partial_cmp(&b?)?.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseOrdering {
    pub identity: String,
    pub first: String,
    pub second: String,
    pub necessity: Option<Order>,
    pub sufficiency: Option<Order>,
    pub identity_mention_rate: Option<Order>,
    pub non_protected_rate: Option<Order>,
    /// Higher sufficiency goes with a higher F18/F19 rate.
    pub sufficiency_tracks_identity_errors: Option<bool>,
    /// Lower necessity goes with a higher F22-F24 rate.
    pub necessity_tracks_non_protected_errors: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSummary {
    pub rows: Vec<HypothesisRow>,
    pub pairs: Vec<PairwiseOrdering>,
}

fn reverse(o: Order) -> Order {
    match o {
        Order::Less => Order::Greater,
        Order::Equal => Order::Equal,
        Order::Greater => Order::Less,
    }
}

pub fn hypothesis_summary(reports: &[SuiteReport]) -> HypothesisSummary {
    let mut identities: Vec<String> = Vec::new();
    for r in reports {
        for s in &r.scores {
            if !identities.contains(&s.identity) {
                identities.push(s.identity.clone());
            }
        }
    }
    let mut rows = Vec::new();
    let mut pairs = Vec::new();
    for identity in &identities {
        let per: Vec<HypothesisRow> = reports
            .iter()
            .map(|r| {
                let s = r.score_row(identity);
                HypothesisRow {
                    identity: identity.clone(),
                    classifier: r.classifier.clone(),
                    necessity: s.and_then(|s| s.necessity.as_ref()).map(|m| m.mean),
                    sufficiency: s.and_then(|s| s.sufficiency.as_ref()).map(|m| m.mean),
                    identity_mention_rate: r.pooled_rate(IDENTITY_MENTION_FUNCTIONALITIES, Some(identity)),
                    non_protected_rate: r.pooled_rate(NON_PROTECTED_FUNCTIONALITIES, None),
                }
            })
            .collect();
        for (i, a) in per.iter().enumerate() {
            for b in &per[i + 1..] {
                let nec = compare(a.necessity, b.necessity);
                let suff = compare(a.sufficiency, b.sufficiency);
                let idr = compare(a.identity_mention_rate, b.identity_mention_rate);
                let npr = compare(a.non_protected_rate, b.non_protected_rate);
                pairs.push(PairwiseOrdering {
                    identity: identity.clone(),
                    first: a.classifier.clone(),
                    second: b.classifier.clone(),
                    necessity: nec,
                    sufficiency: suff,
                    identity_mention_rate: idr,
                    non_protected_rate: npr,
                    sufficiency_tracks_identity_errors: suff.zip(idr).map(|(s, r)| s == r),
                    necessity_tracks_non_protected_errors: nec.zip(npr).map(|(n, r)| n == reverse(r)),
                });
            }
        }
        rows.extend(per);
    }
    HypothesisSummary { rows, pairs }
}
