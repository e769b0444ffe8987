//! Reference server for the wire protocol, backed by the stubs.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use serde::Serialize;
use tokio::sync::oneshot;

use super::protocol::{
    ErrorResponse, InfillRequest, InfillResponse, PredictRequest, PredictResponse, INFILL_PATH, PREDICT_PATH,
};
use super::{StubClassifier, StubInfiller};

pub struct StubServerState {
    pub classifier: StubClassifier,
    pub infiller: StubInfiller,
    predict_requests: AtomicU64,
    infill_requests: AtomicU64,
    failed_requests: AtomicU64,
}

impl StubServerState {
    pub fn new(classifier: StubClassifier, infiller: StubInfiller) -> Self {
        Self {
            classifier,
            infiller,
            predict_requests: AtomicU64::new(0),
            infill_requests: AtomicU64::new(0),
            failed_requests: AtomicU64::new(0),
        }
    }

    /// (predict, infill, failed) request counts.
    pub fn counts(&self) -> (u64, u64, u64) {
        (
            self.predict_requests.load(Ordering::Relaxed),
            self.infill_requests.load(Ordering::Relaxed),
            self.failed_requests.load(Ordering::Relaxed),
        )
    }
}

fn json<T: Serialize>(status: StatusCode, body: &T) -> Response {
    let body = serde_json::to_string(body).expect("response serializes");
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error(state: &StubServerState, status: StatusCode, id: String, message: String) -> Response {
    state.failed_requests.fetch_add(1, Ordering::Relaxed);
    json(status, &ErrorResponse { id, error: message })
}

/// Best-effort id recovery from a body that failed to parse.
fn salvage_id(body: &[u8]) -> String {
    serde_json::from_slice::<serde_json::Value>(body)
        .ok()
        .and_then(|v| v.get("id").and_then(|i| i.as_str()).map(str::to_string))
        .unwrap_or_default()
}

async fn predict(State(state): State<Arc<StubServerState>>, body: Bytes) -> Response {
    state.predict_requests.fetch_add(1, Ordering::Relaxed);
    let req: PredictRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(&state, StatusCode::BAD_REQUEST, salvage_id(&body), format!("bad predict request: {e}")),
    };
    let labels = req.texts.iter().map(|t| state.classifier.classify(t).to_wire()).collect();
    json(StatusCode::OK, &PredictResponse { id: req.id, labels })
}

async fn infill(State(state): State<Arc<StubServerState>>, body: Bytes) -> Response {
    state.infill_requests.fetch_add(1, Ordering::Relaxed);
    let req: InfillRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(&state, StatusCode::BAD_REQUEST, salvage_id(&body), format!("bad infill request: {e}")),
    };
    if req.samples == 0 {
        return error(&state, StatusCode::BAD_REQUEST, req.id, "samples must be >= 1".into());
    }
    match state.infiller.generate(&req.masked_text, &req.mask_token, req.samples, req.seed) {
        Ok(texts) => json(StatusCode::OK, &InfillResponse { id: req.id, texts }),
        Err(e) => error(&state, StatusCode::BAD_REQUEST, req.id, e.to_string()),
    }
}

pub fn router(state: Arc<StubServerState>) -> Router {
    Router::new()
        .route(PREDICT_PATH, post(predict))
        .route(INFILL_PATH, post(infill))
        .with_state(state)
}

/// Serve on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<StubServerState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// A stub server running on a background thread.
pub struct StubServerHandle {
    pub addr: SocketAddr,
    pub state: Arc<StubServerState>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl StubServerHandle {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) -> std::io::Result<()> {
        self.stop_inner()
    }

    fn stop_inner(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().expect("server thread panicked"),
            None => Ok(()),
        }
    }
}

impl Drop for StubServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_inner();
    }
}

/// Bind `addr` (use port 0 for an ephemeral port) and serve in the background.
pub fn spawn(addr: &str, state: Arc<StubServerState>) -> std::io::Result<StubServerHandle> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
    let bound = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread_state = state.clone();
    let thread = std::thread::spawn(move || {
        runtime.block_on(serve(listener, thread_state, async {
            let _ = rx.await;
        }))
    });
    Ok(StubServerHandle {
        addr: bound,
        state,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

/// Why [`run_until_signal`] returned early.
#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

async fn termination() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

/// Bind `addr` and serve on the current thread until SIGINT or SIGTERM.
/// `on_bound` is called with the bound address before serving starts.
pub fn run_until_signal(
    addr: &str,
    state: Arc<StubServerState>,
    on_bound: impl FnOnce(SocketAddr),
) -> Result<(), ServeError> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| ServeError::Bind {
            addr: addr.to_string(),
            source,
        })?;
        on_bound(listener.local_addr()?);
        serve(listener, state, termination()).await?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{InfillQuery, Infiller, Label, Predictor, RemoteInfiller, RemotePredictor, StubMode};

    fn start() -> StubServerHandle {
        let state = Arc::new(StubServerState::new(
            StubClassifier::bundled(StubMode::HateLike),
            StubInfiller::bundled(),
        ));
        spawn("127.0.0.1:0", state).unwrap()
    }

    #[test]
    fn predict_and_infill_round_trip() {
        let server = start();
        let p = RemotePredictor::new(&server.url()).unwrap();
        let texts: Vec<String> = (0..70)
            .map(|i| if i % 2 == 0 { "I hate women".to_string() } else { format!("calm {i}") })
            .collect();
        let labels = p.predict_batch(&texts).unwrap();
        let local = StubClassifier::bundled(StubMode::HateLike).predict_batch(&texts).unwrap();
        assert_eq!(labels, local);
        assert_eq!(labels[0], Label::Positive);

        let g = RemoteInfiller::new(&server.url()).unwrap();
        let q = InfillQuery {
            masked_text: "I hate [MASK]",
            mask_token: "[MASK]",
            samples: 5,
            seed: 3,
            min_tokens: 1,
            max_tokens: 7,
        };
        assert_eq!(g.infill(&q).unwrap(), StubInfiller::bundled().infill(&q).unwrap());
        let (predicts, infills, failed) = server.state.counts();
        assert_eq!(predicts, 3);
        assert_eq!(infills, 1);
        assert_eq!(failed, 0);
        server.stop().unwrap();
    }

    #[test]
    fn malformed_request_gets_error_body_and_server_survives() {
        let server = start();
        let client = reqwest::blocking::Client::new();
        let resp = client
            .post(format!("{}/predict", server.url()))
            .body(r#"{"id":"x1","texts":"oops"}"#)
            .send()
            .unwrap();
        assert_eq!(resp.status(), 400);
        let body: ErrorResponse = serde_json::from_str(&resp.text().unwrap()).unwrap();
        assert_eq!(body.id, "x1");
        assert!(!body.error.is_empty());

        let resp = client
            .post(format!("{}/infill", server.url()))
            .body(r#"{"id":"x2","masked_text":"no slot","mask_token":"[MASK]","samples":1,"seed":0,"min_tokens":1,"max_tokens":7}"#)
            .send()
            .unwrap();
        assert_eq!(resp.status(), 400);

        let p = RemotePredictor::new(&server.url()).unwrap();
        assert_eq!(p.predict_one("Muslims are scum.").unwrap(), Label::Positive);
        assert_eq!(server.state.counts().2, 2);
    }
}
