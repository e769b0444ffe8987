//! Prediction and infilling capabilities.
//!
//! The engine only needs two things from the outside world: hard binary labels
//! for a batch of texts, and complete infilled texts for a masked rendering.
//! Both are traits so stubs and HTTP clients are interchangeable.

mod infill;
pub mod protocol;
mod remote;
pub mod server;
mod stub;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use infill::{conforming_infill, extract_fills, InfillDiagnostics, InfillOutcome};
pub use remote::{RemoteInfiller, RemotePredictor, RetryPolicy};
pub use stub::{
    normalize_word, MaskTokenInfiller, Selection, StubClassifier, StubInfiller, StubMode, BUNDLED_ABUSE_WORDS,
    BUNDLED_IDENTITY_WORDS, BUNDLED_NEUTRAL_INFILLS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

/// Binary classifier output. `Positive` is the explained class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_wire(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Negative),
            1 => Some(Label::Positive),
            _ => None,
        }
    }

    pub fn to_wire(self) -> u8 {
        match self {
            Label::Negative => 0,
            Label::Positive => 1,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

pub trait Predictor: Send + Sync {
    /// One label per text, in input order.
    fn predict_batch(&self, texts: &[String]) -> Result<Vec<Label>, BackendError>;

    fn predict_one(&self, text: &str) -> Result<Label, BackendError> {
        let labels = self.predict_batch(&[text.to_string()])?;
        labels
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Protocol("empty prediction response".into()))
    }
}

/// Parameters of one infill call.
#[derive(Debug, Clone, Copy)]
pub struct InfillQuery<'a> {
    pub masked_text: &'a str,
    pub mask_token: &'a str,
    pub samples: usize,
    pub seed: u64,
    pub min_tokens: usize,
    pub max_tokens: usize,
}

pub trait Infiller: Send + Sync {
    /// `query.samples` complete texts with every mask slot filled.
    fn infill(&self, query: &InfillQuery<'_>) -> Result<Vec<String>, BackendError>;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn predict_batch(&self, texts: &[String]) -> Result<Vec<Label>, BackendError> {
        (**self).predict_batch(texts)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn predict_batch(&self, texts: &[String]) -> Result<Vec<Label>, BackendError> {
        (**self).predict_batch(texts)
    }
}

impl<I: Infiller + ?Sized> Infiller for &I {
    fn infill(&self, query: &InfillQuery<'_>) -> Result<Vec<String>, BackendError> {
        (**self).infill(query)
    }
}

impl<I: Infiller + ?Sized> Infiller for Box<I> {
    fn infill(&self, query: &InfillQuery<'_>) -> Result<Vec<String>, BackendError> {
        (**self).infill(query)
    }
}
