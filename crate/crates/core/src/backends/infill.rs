//! Engine-side checks on infiller output.
//!
//! Infillers return whole texts. Each text is split back into the kept
//! segments and the generated fills; fills outside the length bounds are
//! re-requested up to [`MAX_RESAMPLES`] times and then truncated.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{BackendError, InfillQuery, Infiller};
use crate::sampler::derive_seed;
use crate::text::{splice_segments, MaskRender, TokenizedDoc};

pub const MAX_RESAMPLES: usize = 5;

/// Share of identical texts above which a render is flagged as degenerate.
const DEGENERATE_SHARE: f64 = 0.9;
/// Renders with fewer samples are not checked for degeneracy.
const DEGENERATE_MIN_SAMPLES: usize = 10;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfillDiagnostics {
    pub requested: usize,
    pub resample_calls: usize,
    pub truncated: usize,
    /// Texts whose kept tokens could not be located.
    pub preservation_violations: usize,
    /// Fills identical to the original tokens they replace.
    pub original_duplicates: usize,
    pub degenerate_renders: usize,
}

impl InfillDiagnostics {
    pub fn merge(&mut self, other: &InfillDiagnostics) {
        self.requested += other.requested;
        self.resample_calls += other.resample_calls;
        self.truncated += other.truncated;
        self.preservation_violations += other.preservation_violations;
        self.original_duplicates += other.original_duplicates;
        self.degenerate_renders += other.degenerate_renders;
    }
}

#[derive(Debug, Clone)]
pub struct InfillOutcome {
    pub texts: Vec<String>,
    pub diagnostics: InfillDiagnostics,
}

/// Split `text` into the fills placed between `segments`, or `None` if the
/// kept segments do not appear in order.
pub fn extract_fills<'t, S: AsRef<str>>(segments: &[S], text: &'t str) -> Option<Vec<&'t str>> {
    let (first, rest_segs) = segments.split_first()?;
    let (last, middle) = rest_segs.split_last()?;
    let mut rest = text.strip_prefix(first.as_ref())?;
    let mut fills = Vec::with_capacity(rest_segs.len());
    for seg in middle {
        let seg = seg.as_ref();
        let at = rest.find(seg)?;
        fills.push(&rest[..at]);
        rest = &rest[at + seg.len()..];
    }
    fills.push(rest.strip_suffix(last.as_ref())?);
    Some(fills)
}

enum Check {
    Ok,
    TooLong,
    TooShort,
    Broken,
}

fn check(segments: &[String], text: &str, min: usize, max: usize) -> Check {
    match extract_fills(segments, text) {
        None => Check::Broken,
        Some(fills) => {
            let lens = fills.iter().map(|f| f.split_whitespace().count());
            let mut verdict = Check::Ok;
            for len in lens {
                if len > max {
                    verdict = Check::TooLong;
                } else if len < min {
                    return Check::TooShort;
                }
            }
            verdict
        }
    }
}

fn truncate_fills(segments: &[String], text: &str, max: usize) -> Option<String> {
    let fills = extract_fills(segments, text)?;
    let clipped: Vec<String> = fills
        .iter()
        .map(|f| {
            if f.split_whitespace().count() > max {
                f.split_whitespace().take(max).collect::<Vec<_>>().join(" ")
            } else {
                f.to_string()
            }
        })
        .collect();
    Some(splice_segments(segments, &clipped))
}

/// Request `count` infills for `render` and enforce the length bounds.
///
/// `original` enables counting fills that reproduce the masked tokens.
pub fn conforming_infill(
    infiller: &dyn Infiller,
    render: &MaskRender,
    count: usize,
    seed: u64,
    min_tokens: usize,
    max_tokens: usize,
    original: Option<&TokenizedDoc>,
) -> Result<InfillOutcome, BackendError> {
    let query = InfillQuery {
        masked_text: &render.masked_text,
        mask_token: &render.mask_token,
        samples: count,
        seed,
        min_tokens,
        max_tokens,
    };
    let mut texts = infiller.infill(&query)?;
    if texts.len() != count {
        return Err(BackendError::Protocol(format!(
            "asked for {count} infills, received {}",
            texts.len()
        )));
    }
    let segments = render.segments();
    let mut diag = InfillDiagnostics {
        requested: count,
        ..Default::default()
    };

    for (j, text) in texts.iter_mut().enumerate() {
        let mut verdict = check(segments, text, min_tokens, max_tokens);
        let mut attempt = 0;
        while !matches!(verdict, Check::Ok) && attempt < MAX_RESAMPLES {
            attempt += 1;
            diag.resample_calls += 1;
            let retry_seed = derive_seed(seed, &[b"resample", &(j as u64).to_le_bytes(), &(attempt as u64).to_le_bytes()]);
            let mut fresh = infiller.infill(&InfillQuery {
                samples: 1,
                seed: retry_seed,
                ..query
            })?;
            let candidate = fresh
                .pop()
                .ok_or_else(|| BackendError::Protocol("empty resample response".into()))?;
            let candidate_verdict = check(segments, &candidate, min_tokens, max_tokens);
            // A structurally broken resample never replaces a usable text.
            if !(matches!(candidate_verdict, Check::Broken) && !matches!(verdict, Check::Broken)) {
                *text = candidate;
                verdict = candidate_verdict;
            }
        }
        match verdict {
            Check::Ok | Check::TooShort => {}
            Check::TooLong => {
                if let Some(t) = truncate_fills(segments, text, max_tokens) {
                    *text = t;
                    diag.truncated += 1;
                }
            }
            Check::Broken => diag.preservation_violations += 1,
        }
    }

    if let Some(doc) = original {
        for text in &texts {
            if let Some(fills) = extract_fills(segments, text) {
                let dup = fills.iter().zip(&render.slots).any(|(fill, slot)| {
                    let first = slot.covered[0];
                    let last = *slot.covered.last().expect("slot covers a token");
                    fill.trim() == doc.span_text(first, last)
                });
                if dup {
                    diag.original_duplicates += 1;
                }
            }
        }
    }

    // Sentinel texts (mask-token scoring) are identical by design.
    let sentinel = texts.iter().all(|t| *t == render.masked_text);
    if count >= DEGENERATE_MIN_SAMPLES && !sentinel {
        let mut freq: HashMap<&str, usize> = HashMap::new();
        for t in &texts {
            *freq.entry(t.as_str()).or_default() += 1;
        }
        let modal = freq.values().copied().max().unwrap_or(0);
        if modal as f64 > DEGENERATE_SHARE * count as f64 {
            log::warn!(
                "degenerate infiller output for {:?}: {modal}/{count} identical",
                render.masked_text
            );
            diag.degenerate_renders += 1;
        }
    }

    Ok(InfillOutcome { texts, diagnostics: diag })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::backends::{MaskTokenInfiller, Selection, StubInfiller};
    use crate::text::{render_masked, tokenize};

    fn render(text: &str, ix: &[usize]) -> (TokenizedDoc, MaskRender) {
        let doc = tokenize(text);
        let s: BTreeSet<usize> = ix.iter().copied().collect();
        let r = render_masked(&doc, &s, "[MASK]", true).unwrap();
        (doc, r)
    }

    #[test]
    fn extract_examples() {
        let (_, r) = render("I hate women", &[0, 2]);
        assert_eq!(extract_fills(r.segments(), "You hate them"), Some(vec!["You", "them"]));
        assert_eq!(extract_fills(r.segments(), "You love them"), None);
        let (_, r) = render("I hate women", &[2]);
        assert_eq!(extract_fills(r.segments(), "I hate her."), Some(vec!["her."]));
        assert_eq!(extract_fills(r.segments(), "We hate her."), None);
    }

    #[test]
    fn conforming_stub_output_passes_through() {
        let (doc, r) = render("I hate women", &[2]);
        let g = StubInfiller::new(["her.", "how it is sometimes."], Selection::Cycle).unwrap();
        let out = conforming_infill(&g, &r, 2, 0, 1, 7, Some(&doc)).unwrap();
        assert_eq!(out.texts, vec!["I hate her.", "I hate how it is sometimes."]);
        assert_eq!(out.diagnostics.resample_calls, 0);
        assert_eq!(out.diagnostics.truncated, 0);
    }

    #[test]
    fn long_entry_is_truncated_after_resampling() {
        let (_, r) = render("I hate women", &[2]);
        let g = StubInfiller::new(["one two three four five six seven eight"], Selection::Random).unwrap();
        let out = conforming_infill(&g, &r, 1, 9, 1, 7, None).unwrap();
        assert_eq!(out.texts, vec!["I hate one two three four five six seven"]);
        assert_eq!(out.diagnostics.resample_calls, MAX_RESAMPLES);
        assert_eq!(out.diagnostics.truncated, 1);
    }

    #[test]
    fn resampling_can_recover() {
        let (_, r) = render("I hate women", &[2]);
        let g = StubInfiller::new(["a b c d e f g h i", "ok"], Selection::Random).unwrap();
        let out = conforming_infill(&g, &r, 40, 1, 1, 7, None).unwrap();
        assert!(out.texts.iter().all(|t| t == "I hate ok"));
        assert!(out.diagnostics.resample_calls > 0);
    }

    #[test]
    fn mask_token_mode_copies_render() {
        let (_, r) = render("I hate women", &[0, 1]);
        let out = conforming_infill(&MaskTokenInfiller, &r, 3, 0, 1, 7, None).unwrap();
        assert_eq!(out.texts, vec!["[MASK] women"; 3]);
        assert_eq!(out.diagnostics.degenerate_renders, 0);
    }

    #[test]
    fn degenerate_and_duplicate_diagnostics() {
        let (doc, r) = render("I hate women", &[2]);
        let g = StubInfiller::new(["women"], Selection::Random).unwrap();
        let out = conforming_infill(&g, &r, 12, 0, 1, 7, Some(&doc)).unwrap();
        assert_eq!(out.diagnostics.degenerate_renders, 1);
        assert_eq!(out.diagnostics.original_duplicates, 12);
    }

    struct Broken;
    impl Infiller for Broken {
        fn infill(&self, q: &InfillQuery<'_>) -> Result<Vec<String>, BackendError> {
            Ok(vec!["totally different".to_string(); q.samples])
        }
    }

    #[test]
    fn preservation_violations_are_counted() {
        let (_, r) = render("I hate women", &[2]);
        let out = conforming_infill(&Broken, &r, 2, 0, 1, 7, None).unwrap();
        assert_eq!(out.diagnostics.preservation_violations, 2);
    }
}
