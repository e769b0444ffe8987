//! Plain-text tables for suite results.

use std::fmt::Write;

use crate::harness::{HypothesisSummary, MeanSd, Order, SuiteReport};

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "–".into(), |v| format!("{:.1}%", v * 100.0))
}

fn mean_sd(m: Option<&MeanSd>) -> String {
    m.map_or_else(|| "–".into(), |m| format!("{:.2} ± {:.2}", m.mean, m.sd))
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "–".into(), |v| format!("{v:.2}"))
}

fn ord(o: Option<Order>) -> &'static str {
    match o {
        Some(Order::Less) => "<",
        Some(Order::Equal) => "=",
        Some(Order::Greater) => ">",
        None => "?",
    }
}

fn flag(b: Option<bool>) -> &'static str {
    match b {
        Some(true) => "yes",
        Some(false) => "no",
        None => "n/a",
    }
}

/// Positive rates per (functionality, identity) and score aggregates per
/// identity.
pub fn render_suite_table(report: &SuiteReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "classifier: {}", report.classifier);
    let _ = writeln!(out, "{:<8} {:<12} {:>9} {:>8}", "func", "identity", "positive", "rate");
    for r in &report.rates {
        let _ = writeln!(
            out,
            "{:<8} {:<12} {:>9} {:>8}",
            r.functionality,
            r.identity.as_deref().unwrap_or("-"),
            format!("{}/{}", r.positives, r.total),
            pct(Some(r.rate))
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<12} {:>6} {:>8} {:>13} {:>13}",
        "identity", "scored", "excluded", "necessity", "sufficiency"
    );
    for s in &report.scores {
        let _ = writeln!(
            out,
            "{:<12} {:>6} {:>8} {:>13} {:>13}",
            s.identity,
            s.scored_cases,
            s.excluded_cases,
            mean_sd(s.necessity.as_ref()),
            mean_sd(s.sufficiency.as_ref())
        );
    }
    out
}

/// Per identity and classifier: mean N and S on explicit cases, positive
/// rates on identity-mention and non-protected-target functionalities, and
/// the pairwise orderings between classifiers.
pub fn render_hypothesis_table(summary: &HypothesisSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:<18} {:>6} {:>6} {:>9} {:>9}",
        "identity", "classifier", "N", "S", "F18-19", "F22-24"
    );
    for r in &summary.rows {
        let _ = writeln!(
            out,
            "{:<12} {:<18} {:>6} {:>6} {:>9} {:>9}",
            r.identity,
            r.classifier,
            num(r.necessity),
            num(r.sufficiency),
            pct(r.identity_mention_rate),
            pct(r.non_protected_rate)
        );
    }
    if !summary.pairs.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<12} {:<30} {:>3} {:>3} {:>6} {:>6}  {:<22} low N tracks F22-24",
            "identity", "pair", "N", "S", "F18-19", "F22-24", "S tracks F18-19 rate"
        );
        for p in &summary.pairs {
            let _ = writeln!(
                out,
                "{:<12} {:<30} {:>3} {:>3} {:>6} {:>6}  {:<22} {}",
                p.identity,
                format!("{} vs {}", p.first, p.second),
                ord(p.necessity),
                ord(p.sufficiency),
                ord(p.identity_mention_rate),
                ord(p.non_protected_rate),
                flag(p.sufficiency_tracks_identity_errors),
                flag(p.necessity_tracks_non_protected_errors)
            );
        }
    }
    out
}
