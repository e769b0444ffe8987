//! Deterministic in-process backends.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BackendError, InfillQuery, Infiller, Label, Predictor};
use crate::sampler::derive_seed;
use crate::text::splice_segments;

/// Abuse vocabulary of the bundled stub classifiers.
pub const BUNDLED_ABUSE_WORDS: &[&str] = &[
    "hate", "despise", "disgusting", "disgust", "vile", "scum", "pest", "sick", "hurt", "parasites",
    "death", "stand", "filth", "trash", "dumbest", "kill",
];

/// Identity terms of the bundled stub classifiers.
pub const BUNDLED_IDENTITY_WORDS: &[&str] = &["women", "woman", "muslims", "muslim"];

/// Neutral infills; none contains an abuse or identity word.
pub const BUNDLED_NEUTRAL_INFILLS: &[&str] = &[
    "her.",
    "how it is sometimes.",
    "the weather",
    "my neighbours",
    "going for a walk",
    "this book",
    "them",
    "it",
    "people in the park",
    "the new bus timetable",
    "you",
    "a cup of tea",
];

/// Lowercase and strip leading/trailing punctuation.
pub fn normalize_word(w: &str) -> String {
    w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StubMode {
    /// Positive iff an abuse word and an identity word both occur.
    HateLike,
    /// Positive iff an abuse word occurs.
    AbuseLike,
    /// Positive iff an identity word occurs.
    IdentityTrigger,
}

impl std::str::FromStr for StubMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hate_like" => Ok(StubMode::HateLike),
            "abuse_like" => Ok(StubMode::AbuseLike),
            "identity_trigger" => Ok(StubMode::IdentityTrigger),
            other => Err(format!("unknown stub classifier {other:?}")),
        }
    }
}

impl std::fmt::Display for StubMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StubMode::HateLike => "hate_like",
            StubMode::AbuseLike => "abuse_like",
            StubMode::IdentityTrigger => "identity_trigger",
        })
    }
}

/// Lexicon-rule classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubClassifier {
    pub abuse_lexicon: BTreeSet<String>,
    pub identity_lexicon: BTreeSet<String>,
    pub mode: StubMode,
}

impl StubClassifier {
    pub fn new<A, I, S, T>(mode: StubMode, abuse: A, identity: I) -> Self
    where
        A: IntoIterator<Item = S>,
        I: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        Self {
            abuse_lexicon: abuse.into_iter().map(|w| normalize_word(w.as_ref())).collect(),
            identity_lexicon: identity.into_iter().map(|w| normalize_word(w.as_ref())).collect(),
            mode,
        }
    }

    pub fn bundled(mode: StubMode) -> Self {
        Self::new(mode, BUNDLED_ABUSE_WORDS, BUNDLED_IDENTITY_WORDS)
    }

    pub fn classify(&self, text: &str) -> Label {
        let words: Vec<String> = text.split_whitespace().map(normalize_word).collect();
        let abuse = words.iter().any(|w| self.abuse_lexicon.contains(w));
        let identity = words.iter().any(|w| self.identity_lexicon.contains(w));
        let positive = match self.mode {
            StubMode::HateLike => abuse && identity,
            StubMode::AbuseLike => abuse,
            StubMode::IdentityTrigger => identity,
        };
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

impl Predictor for StubClassifier {
    fn predict_batch(&self, texts: &[String]) -> Result<Vec<Label>, BackendError> {
        Ok(texts.iter().map(|t| self.classify(t)).collect())
    }
}

/// How a stub infiller picks lexicon entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Independent uniform draw per slot, seeded by (seed, sample index).
    #[default]
    Random,
    /// Walk the lexicon in order starting at `seed`.
    Cycle,
}

/// Fills each mask slot with an entry from a fixed lexicon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubInfiller {
    pub lexicon: Vec<String>,
    pub selection: Selection,
}

impl StubInfiller {
    pub fn new<S: AsRef<str>>(lexicon: impl IntoIterator<Item = S>, selection: Selection) -> Result<Self, BackendError> {
        let lexicon: Vec<String> = lexicon.into_iter().map(|s| s.as_ref().to_string()).collect();
        if lexicon.is_empty() {
            return Err(BackendError::Config("stub lexicon is empty".into()));
        }
        Ok(Self { lexicon, selection })
    }

    pub fn bundled() -> Self {
        Self::new(BUNDLED_NEUTRAL_INFILLS, Selection::Random).expect("bundled lexicon non-empty")
    }

    /// Generate `samples` texts for `masked_text`. Slots are the occurrences
    /// of `mask_token`.
    pub fn generate(&self, masked_text: &str, mask_token: &str, samples: usize, seed: u64) -> Result<Vec<String>, BackendError> {
        if mask_token.is_empty() {
            return Err(BackendError::Protocol("mask token is empty".into()));
        }
        let segments: Vec<&str> = masked_text.split(mask_token).collect();
        let slots = segments.len() - 1;
        if slots == 0 {
            return Err(BackendError::Protocol(format!("no {mask_token:?} in masked text")));
        }
        let l = self.lexicon.len();
        let out = (0..samples)
            .map(|j| {
                let fills: Vec<&str> = match self.selection {
                    Selection::Random => {
                        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b"stub-infill", &(j as u64).to_le_bytes()]));
                        (0..slots).map(|_| self.lexicon[rng.random_range(0..l)].as_str()).collect()
                    }
                    Selection::Cycle => (0..slots)
                        .map(|s| {
                            let idx = (seed as usize).wrapping_add(j * slots + s) % l;
                            self.lexicon[idx].as_str()
                        })
                        .collect(),
                };
                splice_segments(&segments, &fills)
            })
            .collect();
        Ok(out)
    }
}

impl Infiller for StubInfiller {
    fn infill(&self, q: &InfillQuery<'_>) -> Result<Vec<String>, BackendError> {
        self.generate(q.masked_text, q.mask_token, q.samples, q.seed)
    }
}

/// Leaves the mask sentinel in place.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaskTokenInfiller;

impl Infiller for MaskTokenInfiller {
    fn infill(&self, q: &InfillQuery<'_>) -> Result<Vec<String>, BackendError> {
        Ok(vec![q.masked_text.to_string(); q.samples])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn classifier_rules() {
        let hate = StubClassifier::new(StubMode::HateLike, ["hate"], ["women"]);
        assert_eq!(hate.classify("I hate women"), Label::Positive);
        assert_eq!(hate.classify("I hate oranges"), Label::Negative);
        assert_eq!(hate.classify("I HATE Women."), Label::Positive);

        let abuse = StubClassifier::new(StubMode::AbuseLike, ["hate"], Vec::<&str>::new());
        assert_eq!(abuse.classify("I hate oranges"), Label::Positive);
        assert_eq!(abuse.classify("I like oranges"), Label::Negative);

        let ident = StubClassifier::new(StubMode::IdentityTrigger, ["hate"], ["women"]);
        assert_eq!(ident.classify("I love women"), Label::Positive);
    }

    #[test]
    fn batching_is_transparent() {
        let p = StubClassifier::bundled(StubMode::HateLike);
        let xs = texts(&["I hate women.", "nice day"]);
        let ys = texts(&["Muslims are scum.", "I hate her."]);
        let mut both = xs.clone();
        both.extend(ys.clone());
        let mut split = p.predict_batch(&xs).unwrap();
        split.extend(p.predict_batch(&ys).unwrap());
        assert_eq!(p.predict_batch(&both).unwrap(), split);
    }

    #[test]
    fn bundled_infills_are_neutral() {
        for mode in [StubMode::HateLike, StubMode::AbuseLike, StubMode::IdentityTrigger] {
            let p = StubClassifier::bundled(mode);
            for fill in BUNDLED_NEUTRAL_INFILLS {
                assert_eq!(p.classify(fill), Label::Negative, "{fill}");
            }
        }
    }

    #[test]
    fn cycle_infill_example() {
        let g = StubInfiller::new(["her.", "how it is sometimes."], Selection::Cycle).unwrap();
        let out = g.generate("I hate [MASK]", "[MASK]", 2, 0).unwrap();
        assert_eq!(out, vec!["I hate her.", "I hate how it is sometimes."]);
    }

    #[test]
    fn random_infill_is_deterministic() {
        let g = StubInfiller::bundled();
        let a = g.generate("[MASK] hate [MASK]", "[MASK]", 20, 11).unwrap();
        let b = g.generate("[MASK] hate [MASK]", "[MASK]", 20, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|t| t.contains(" hate ")));
        let c = g.generate("[MASK] hate [MASK]", "[MASK]", 20, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn infill_without_slot_is_rejected() {
        let g = StubInfiller::bundled();
        assert!(g.generate("no slots here", "[MASK]", 1, 0).is_err());
        assert!(StubInfiller::new(Vec::<String>::new(), Selection::Random).is_err());
    }

    #[test]
    fn mask_token_infiller_copies() {
        let q = InfillQuery {
            masked_text: "I [MASK]",
            mask_token: "[MASK]",
            samples: 3,
            seed: 0,
            min_tokens: 1,
            max_tokens: 7,
        };
        assert_eq!(MaskTokenInfiller.infill(&q).unwrap(), vec!["I [MASK]"; 3]);
    }
}
