//! Attribution units and masked renderings.
//!
//! A document is split into maximal runs of non-whitespace; punctuation stays
//! attached to its word, so `"so much."` yields the units `so` and `much.`.
//! Masking replaces a subset of units with a sentinel. By default every
//! maximal run of consecutive masked units collapses into one sentinel so the
//! infiller fills a single span for it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MASK_TOKEN: &str = "[MASK]";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TextError {
    #[error("token index {index} out of range for document of {n} tokens")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("mask subset is empty")]
    EmptySubset,
    #[error("expected {expected} infills, got {actual}")]
    ArityMismatch { expected: usize, actual: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub surface: String,
    pub byte_start: usize,
    pub byte_end: usize,
    /// Whitespace between the previous token (or start of text) and this one.
    pub leading_sep: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub original_text: String,
    pub tokens: Vec<TokenSpan>,
    /// Whitespace after the last token.
    pub trailing_sep: String,
}

impl TokenizedDoc {
    /// Number of attribution units.
    pub fn n(&self) -> usize {
        self.tokens.len()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.surface.as_str())
    }

    /// Reassemble the text from its spans.
    pub fn detokenize(&self) -> String {
        let mut out = String::with_capacity(self.original_text.len());
        for t in &self.tokens {
            out.push_str(&t.leading_sep);
            out.push_str(&t.surface);
        }
        out.push_str(&self.trailing_sep);
        out
    }

    /// Original text of tokens `first..=last`, including inner separators.
    pub fn span_text(&self, first: usize, last: usize) -> &str {
        &self.original_text[self.tokens[first].byte_start..self.tokens[last].byte_end]
    }
}

pub fn tokenize(text: &str) -> TokenizedDoc {
    let mut tokens = Vec::new();
    let mut cursor = 0;
    let mut start: Option<usize> = None;
    for (pos, ch) in text.char_indices() {
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some(pos),
            (true, Some(s)) => {
                tokens.push(TokenSpan {
                    surface: text[s..pos].to_string(),
                    byte_start: s,
                    byte_end: pos,
                    leading_sep: text[cursor..s].to_string(),
                });
                cursor = pos;
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push(TokenSpan {
            surface: text[s..].to_string(),
            byte_start: s,
            byte_end: text.len(),
            leading_sep: text[cursor..s].to_string(),
        });
        cursor = text.len();
    }
    TokenizedDoc {
        original_text: text.to_string(),
        tokens,
        trailing_sep: text[cursor..].to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSlot {
    /// Consecutive token indices replaced by this slot.
    pub covered: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRender {
    pub masked_text: String,
    pub slots: Vec<MaskSlot>,
    pub mask_token: String,
    /// Literal text around the slots; always `slots.len() + 1` entries.
    segments: Vec<String>,
}

impl MaskRender {
    pub fn segments(&self) -> &[String] {
        &self.segments
    }
}

/// Mask `subset` in `doc`. With `merge` set, each maximal run of consecutive
/// indices becomes a single slot; otherwise every index gets its own slot.
pub fn render_masked(
    doc: &TokenizedDoc,
    subset: &BTreeSet<usize>,
    mask_token: &str,
    merge: bool,
) -> Result<MaskRender, TextError> {
    if subset.is_empty() {
        return Err(TextError::EmptySubset);
    }
    let n = doc.n();
    if let Some(&index) = subset.iter().next_back().filter(|&&i| i >= n) {
        return Err(TextError::IndexOutOfRange { index, n });
    }

    let mut segments = Vec::with_capacity(subset.len() + 1);
    let mut slots: Vec<MaskSlot> = Vec::new();
    let mut current = String::new();
    let mut prev_masked = false;
    for (i, tok) in doc.tokens.iter().enumerate() {
        if subset.contains(&i) {
            if merge && prev_masked {
                slots.last_mut().expect("open slot").covered.push(i);
            } else {
                current.push_str(&tok.leading_sep);
                segments.push(std::mem::take(&mut current));
                slots.push(MaskSlot { covered: vec![i] });
            }
            prev_masked = true;
        } else {
            current.push_str(&tok.leading_sep);
            current.push_str(&tok.surface);
            prev_masked = false;
        }
    }
    current.push_str(&doc.trailing_sep);
    segments.push(current);

    let masked_text = segments.join(mask_token);
    Ok(MaskRender {
        masked_text,
        slots,
        mask_token: mask_token.to_string(),
        segments,
    })
}

/// Replace the k-th slot of `render` with `infills[k]`.
pub fn splice<S: AsRef<str>>(render: &MaskRender, infills: &[S]) -> Result<String, TextError> {
    if infills.len() != render.slots.len() {
        return Err(TextError::ArityMismatch {
            expected: render.slots.len(),
            actual: infills.len(),
        });
    }
    Ok(splice_segments(&render.segments, infills))
}

/// Interleave literal segments with fills. `segments.len()` must be one more
/// than `fills.len()`.
pub(crate) fn splice_segments<A: AsRef<str>, B: AsRef<str>>(segments: &[A], fills: &[B]) -> String {
    debug_assert_eq!(segments.len(), fills.len() + 1);
    let mut out = String::from(segments[0].as_ref());
    for (fill, seg) in fills.iter().zip(&segments[1..]) {
        out.push_str(fill.as_ref());
        out.push_str(seg.as_ref());
    }
    out
}

/// Maximal runs of consecutive indices in ascending order.
pub fn consecutive_runs(subset: &BTreeSet<usize>) -> Vec<Vec<usize>> {
    let mut runs: Vec<Vec<usize>> = Vec::new();
    for &i in subset {
        match runs.last_mut() {
            Some(run) if *run.last().expect("non-empty run") + 1 == i => run.push(i),
            _ => runs.push(vec![i]),
        }
    }
    runs
}
