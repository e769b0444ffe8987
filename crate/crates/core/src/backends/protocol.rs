//! Wire bodies shared by the HTTP client and the stub server.
//!
//! `POST /predict` and `POST /infill` carry UTF-8 JSON. Failures are reported
//! as `{"id": ..., "error": ...}`.

use serde::{Deserialize, Serialize};

pub const PREDICT_PATH: &str = "/predict";
pub const INFILL_PATH: &str = "/infill";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub id: String,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub id: String,
    /// 1 = positive.
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfillRequest {
    pub id: String,
    pub masked_text: String,
    pub mask_token: String,
    pub samples: usize,
    pub seed: u64,
    pub min_tokens: usize,
    pub max_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfillResponse {
    pub id: String,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub id: String,
    pub error: String,
}
