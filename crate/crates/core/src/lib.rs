//! Necessity and sufficiency attribution for binary text classifiers.
//!
//! Each token of a positively classified text receives two scores. Necessity
//! is how often replacing the token (together with a random subset of other
//! tokens) flips the prediction. Sufficiency is how often keeping the token
//! while replacing others preserves it. Replacements come from an infilling
//! model conditioned on the negative class, so perturbed texts stay fluent.
//!
//! Scores are generic over the scalar type; see [`scalar::Scalar`].

pub mod backends;
pub mod estimator;
pub mod explain;
pub mod harness;
pub mod report;
pub mod sampler;
pub mod scalar;
pub mod text;

pub use backends::{BackendError, Infiller, Label, Predictor};
pub use estimator::{score, PerturbedInstance, ScoreSet, Source, TokenScore};
pub use explain::{explain, ExplainError, Explanation};
pub use sampler::{NeighborhoodConfig, ScoringMode, SizeLaw};
pub use scalar::{Exact, Scalar};
pub use text::{tokenize, TokenizedDoc};

pub type ScoreSetF64 = ScoreSet<f64>;
pub type ScoreSetF32 = ScoreSet<f32>;
pub type ExactScoreSet = ScoreSet<Exact>;
pub type ExplanationF64 = Explanation<f64>;
