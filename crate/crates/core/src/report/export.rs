//! Machine-readable JSON export and import.
//!
//! Undefined scores are written as explicit `null`, never `0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::Label;
use crate::estimator::{ScoreSet, TokenScore};
use crate::harness::SuiteReport;
use crate::text::TokenizedDoc;

pub const SCORE_EXPORT_FORMAT: &str = "necsuf-scores/1";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("malformed export: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported export format {0:?}")]
    Format(String),
    #[error("export has {tokens} token records but {scores} scores")]
    Arity { tokens: usize, scores: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenRecord {
    pub index: usize,
    pub token: String,
    pub necessity: Option<f64>,
    pub sufficiency: Option<f64>,
    pub nec_count: usize,
    pub suff_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreExport {
    pub format: String,
    pub text: String,
    pub base_label: Label,
    pub baseline_value: Option<f64>,
    pub tokens: Vec<TokenRecord>,
}

impl ScoreExport {
    pub fn new(doc: &TokenizedDoc, scores: &ScoreSet<f64>) -> Result<Self, ReportError> {
        if doc.n() != scores.tokens.len() {
            return Err(ReportError::Arity {
                tokens: doc.n(),
                scores: scores.tokens.len(),
            });
        }
        Ok(Self {
            format: SCORE_EXPORT_FORMAT.to_string(),
            text: doc.original_text.clone(),
            base_label: scores.base_label,
            baseline_value: scores.baseline_value,
            tokens: doc
                .tokens
                .iter()
                .zip(&scores.tokens)
                .enumerate()
                .map(|(index, (tok, s))| TokenRecord {
                    index,
                    token: tok.surface.clone(),
                    necessity: s.necessity,
                    sufficiency: s.sufficiency,
                    nec_count: s.nec_count,
                    suff_count: s.suff_count,
                })
                .collect(),
        })
    }

    pub fn score_set(&self) -> ScoreSet<f64> {
        ScoreSet {
            base_label: self.base_label,
            tokens: self
                .tokens
                .iter()
                .map(|t| TokenScore {
                    necessity: t.necessity,
                    sufficiency: t.sufficiency,
                    nec_count: t.nec_count,
                    suff_count: t.suff_count,
                })
                .collect(),
            baseline_value: self.baseline_value,
        }
    }
}

pub fn export_scores(doc: &TokenizedDoc, scores: &ScoreSet<f64>) -> Result<String, ReportError> {
    Ok(serde_json::to_string_pretty(&ScoreExport::new(doc, scores)?)?)
}

pub fn import_scores(json: &str) -> Result<ScoreExport, ReportError> {
    let export: ScoreExport = serde_json::from_str(json)?;
    if export.format != SCORE_EXPORT_FORMAT {
        return Err(ReportError::Format(export.format));
    }
    Ok(export)
}

pub fn export_suite(report: &SuiteReport) -> Result<String, ReportError> {
    Ok(serde_json::to_string_pretty(report)?)
}

pub fn import_suite(json: &str) -> Result<SuiteReport, ReportError> {
    Ok(serde_json::from_str(json)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{MeanSd, RateRow, ScoreRow};
    use crate::text::tokenize;
    use proptest::prelude::*;

    #[test]
    fn one_token_record_with_explicit_null() {
        let doc = tokenize("hate");
        let s = ScoreSet {
            base_label: Label::Positive,
            tokens: vec![TokenScore {
                necessity: None,
                sufficiency: Some(0.25),
                nec_count: 0,
                suff_count: 4,
            }],
            baseline_value: None,
        };
        let json = export_scores(&doc, &s).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let rec = &v["tokens"][0];
        assert!(rec["necessity"].is_null());
        assert_eq!(rec["sufficiency"], 0.25);
        assert_eq!(rec["suff_count"], 4);
        assert_eq!(v["tokens"].as_array().unwrap().len(), 1);
        assert!(json.find("\"index\"").unwrap() < json.find("\"necessity\"").unwrap());
        assert_eq!(import_scores(&json).unwrap().score_set(), s);
    }

    #[test]
    fn arity_and_format_errors() {
        let doc = tokenize("a b");
        let s = ScoreSet::<f64> {
            base_label: Label::Positive,
            tokens: vec![],
            baseline_value: None,
        };
        assert!(matches!(export_scores(&doc, &s), Err(ReportError::Arity { .. })));
        let bad = r#"{"format":"x","text":"","base_label":"positive","baseline_value":null,"tokens":[]}"#;
        assert!(matches!(import_scores(bad), Err(ReportError::Format(_))));
    }

    #[test]
    fn suite_report_round_trip() {
        let report = SuiteReport {
            classifier: "hate_like".into(),
            store_hash: "ab".into(),
            texts_digest: "cd".into(),
            rates: vec![RateRow {
                functionality: "F18".into(),
                identity: Some("women".into()),
                positives: 1,
                total: 2,
                rate: 0.5,
            }],
            scores: vec![ScoreRow {
                identity: "women".into(),
                scored_cases: 2,
                excluded_cases: 0,
                necessity: Some(MeanSd { mean: 0.5, sd: 0.5, count: 2 }),
                sufficiency: None,
            }],
            cases: vec![],
        };
        let json = export_suite(&report).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["rates"][0]["functionality"], "F18");
        assert_eq!(v["rates"][0]["identity"], "women");
        assert!(v["scores"][0]["sufficiency"].is_null());
        assert_eq!(import_suite(&json).unwrap(), report);
    }

    proptest! {
        #[test]
        fn score_export_round_trips(
            vals in proptest::collection::vec((proptest::option::of(0.0f64..=1.0), proptest::option::of(0.0f64..=1.0), 0usize..500, 0usize..500), 1..12)
        ) {
            let text = (0..vals.len()).map(|i| format!("t{i}")).collect::<Vec<_>>().join(" ");
            let doc = tokenize(&text);
            let s = ScoreSet {
                base_label: Label::Positive,
                tokens: vals.iter().map(|&(n, s, a, b)| TokenScore { necessity: n, sufficiency: s, nec_count: a, suff_count: b }).collect(),
                baseline_value: vals[0].0,
            };
            let json = export_scores(&doc, &s).unwrap();
            let back = import_scores(&json).unwrap();
            prop_assert_eq!(&back, &ScoreExport::new(&doc, &s).unwrap());
            prop_assert_eq!(back.score_set(), s);
        }
    }
}
