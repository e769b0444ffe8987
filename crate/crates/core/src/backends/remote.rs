//! Blocking HTTP clients for the prediction and infill endpoints.

use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::protocol::{
    ErrorResponse, InfillRequest, InfillResponse, PredictRequest, PredictResponse, INFILL_PATH, PREDICT_PATH,
};
use super::{BackendError, InfillQuery, Infiller, Label, Predictor};

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(100),
        }
    }
}

static REQUEST_COUNTER: AtomicU64 = AtomicU64::new(0);

fn next_id(prefix: &str) -> String {
    format!("{prefix}-{}", REQUEST_COUNTER.fetch_add(1, Ordering::Relaxed))
}

#[derive(Debug, Clone)]
struct HttpEndpoint {
    base_url: String,
    client: Client,
    retry: RetryPolicy,
}

impl HttpEndpoint {
    fn new(base_url: &str, retry: RetryPolicy) -> Result<Self, BackendError> {
        let base_url = base_url.trim_end_matches('/').to_string();
        if !(base_url.starts_with("http://") || base_url.starts_with("https://")) {
            return Err(BackendError::Config(format!("unsupported endpoint {base_url:?}")));
        }
        let client = Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self { base_url, client, retry })
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp, BackendError> {
        let url = format!("{}{path}", self.base_url);
        let mut backoff = self.retry.initial_backoff;
        let mut last_err = String::new();
        for attempt in 1..=self.retry.attempts.max(1) {
            match self.client.post(&url).json(body).send() {
                Ok(resp) => {
                    let status = resp.status();
                    let bytes = resp
                        .bytes()
                        .map_err(|e| BackendError::Unavailable(format!("reading response from {url}: {e}")))?;
                    if status.is_success() {
                        return serde_json::from_slice(&bytes)
                            .map_err(|e| BackendError::Protocol(format!("malformed response from {url}: {e}")));
                    }
                    let message = serde_json::from_slice::<ErrorResponse>(&bytes)
                        .map(|e| e.error)
                        .unwrap_or_else(|_| String::from_utf8_lossy(&bytes).into_owned());
                    if !status.is_server_error() {
                        return Err(BackendError::Protocol(format!("{url} answered {status}: {message}")));
                    }
                    last_err = format!("{url} answered {status}: {message}");
                }
                Err(e) => last_err = format!("{url}: {e}"),
            }
            if attempt < self.retry.attempts {
                log::debug!("attempt {attempt} failed ({last_err}); retrying in {backoff:?}");
                thread::sleep(backoff);
                backoff *= 2;
            }
        }
        Err(BackendError::Unavailable(last_err))
    }
}

/// Predictor behind `POST {base}/predict`.
#[derive(Debug, Clone)]
pub struct RemotePredictor {
    endpoint: HttpEndpoint,
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl RemotePredictor {
    pub fn new(base_url: &str) -> Result<Self, BackendError> {
        Self::with_retry(base_url, RetryPolicy::default())
    }

    pub fn with_retry(base_url: &str, retry: RetryPolicy) -> Result<Self, BackendError> {
        Ok(Self {
            endpoint: HttpEndpoint::new(base_url, retry)?,
            batch_size: 32,
            max_in_flight: 4,
        })
    }

    fn predict_chunk(&self, texts: &[String]) -> Result<Vec<Label>, BackendError> {
        let req = PredictRequest {
            id: next_id("predict"),
            texts: texts.to_vec(),
        };
        let resp: PredictResponse = self.endpoint.post(PREDICT_PATH, &req)?;
        if resp.id != req.id {
            return Err(BackendError::Protocol(format!("response id {:?} != request id {:?}", resp.id, req.id)));
        }
        if resp.labels.len() != texts.len() {
            return Err(BackendError::Protocol(format!(
                "{} labels for {} texts",
                resp.labels.len(),
                texts.len()
            )));
        }
        resp.labels
            .into_iter()
            .map(|v| Label::from_wire(v).ok_or_else(|| BackendError::Protocol(format!("label {v} is not 0 or 1"))))
            .collect()
    }
}

impl Predictor for RemotePredictor {
    fn predict_batch(&self, texts: &[String]) -> Result<Vec<Label>, BackendError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            log::warn!("predict batch contains blank texts");
        }
        let chunks: Vec<&[String]> = texts.chunks(self.batch_size.max(1)).collect();
        let workers = self.max_in_flight.clamp(1, chunks.len().max(1));
        let mut results: Vec<Option<Result<Vec<Label>, BackendError>>> = vec![None; chunks.len()];
        thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let chunks = &chunks;
                    scope.spawn(move || {
                        (w..chunks.len())
                            .step_by(workers)
                            .map(|c| (c, self.predict_chunk(chunks[c])))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (c, r) in h.join().expect("predict worker panicked") {
                    results[c] = Some(r);
                }
            }
        });
        let mut out = Vec::with_capacity(texts.len());
        for r in results {
            out.extend(r.expect("every chunk submitted")?);
        }
        Ok(out)
    }
}

/// Infiller behind `POST {base}/infill`.
#[derive(Debug, Clone)]
pub struct RemoteInfiller {
    endpoint: HttpEndpoint,
}

impl RemoteInfiller {
    pub fn new(base_url: &str) -> Result<Self, BackendError> {
        Self::with_retry(base_url, RetryPolicy::default())
    }

    pub fn with_retry(base_url: &str, retry: RetryPolicy) -> Result<Self, BackendError> {
        Ok(Self {
            endpoint: HttpEndpoint::new(base_url, retry)?,
        })
    }
}

impl Infiller for RemoteInfiller {
    fn infill(&self, q: &InfillQuery<'_>) -> Result<Vec<String>, BackendError> {
        let req = InfillRequest {
            id: next_id("infill"),
            masked_text: q.masked_text.to_string(),
            mask_token: q.mask_token.to_string(),
            samples: q.samples,
            seed: q.seed,
            min_tokens: q.min_tokens,
            max_tokens: q.max_tokens,
        };
        let resp: InfillResponse = self.endpoint.post(INFILL_PATH, &req)?;
        if resp.id != req.id {
            return Err(BackendError::Protocol(format!("response id {:?} != request id {:?}", resp.id, req.id)));
        }
        if resp.texts.len() != q.samples {
            return Err(BackendError::Protocol(format!(
                "{} texts for {} requested samples",
                resp.texts.len(),
                q.samples
            )));
        }
        Ok(resp.texts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_http_urls() {
        assert!(matches!(RemotePredictor::new("ftp://x"), Err(BackendError::Config(_))));
    }

    #[test]
    fn unreachable_endpoint_is_unavailable_after_retries() {
        // Port 9 on localhost is essentially never served.
        let retry = RetryPolicy {
            attempts: 2,
            initial_backoff: Duration::from_millis(1),
        };
        let p = RemotePredictor::with_retry("http://127.0.0.1:9", retry).unwrap();
        let err = p.predict_batch(&["hello".to_string()]).unwrap_err();
        assert!(matches!(err, BackendError::Unavailable(_)), "{err:?}");
    }
}
