//! HTTP front end: PNG in, class probabilities out, plus a capture endpoint
//! that files labelled frames into a dataset directory.
//!
//! The model is loaded once and shared read-only; every request runs the
//! same eval-mode forward pass on a blocking worker.

use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use finnger_core::dataset::{load_sample_bytes, Image, NUM_LABELS};
use finnger_core::model::{FinngerModel, ModelInfo, CLASSES};
use finnger_core::tensor::Tensor;
use serde::Serialize;
use tower_http::services::ServeDir;

/// Request bodies above this size are refused with 413.
pub const MAX_BODY_BYTES: usize = 8 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PredictionResponse {
    pub log_probs: [f32; CLASSES],
    pub probs: [f32; CLASSES],
    pub predicted: usize,
    pub model_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct HealthResponse {
    pub status: &'static str,
    pub model_version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SavedResponse {
    /// Path of the stored frame relative to the dataset directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> ApiError {
        ApiError { status, message: message.into() }
    }
}

impl From<BytesRejection> for ApiError {
    fn from(r: BytesRejection) -> ApiError {
        ApiError::new(r.status(), r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

pub struct LoadedModel {
    pub model: FinngerModel,
    pub version: String,
}

impl LoadedModel {
    pub fn new(model: FinngerModel, info: &ModelInfo) -> LoadedModel {
        LoadedModel { model, version: info.version_string() }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LoadedModel, finnger_core::model::ModelError> {
        let (model, info) = FinngerModel::load_with_info(path)?;
        Ok(LoadedModel::new(model, &info))
    }

    /// Eval-mode prediction for one encoded PNG.
    pub fn predict_png(&self, png: &[u8]) -> Result<PredictionResponse, ApiError> {
        let x = load_sample_bytes(png).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
        let internal = |e: finnger_core::model::ModelError| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string());
        let batch = Tensor::stack(&[&x]).map_err(|e| internal(e.into()))?;
        let out = self.model.infer(&batch).map_err(internal)?;
        let mut log_probs = [0f32; CLASSES];
        log_probs.copy_from_slice(&out.data()[..CLASSES]);
        let probs = log_probs.map(f32::exp);
        let predicted = (0..CLASSES).fold(0, |best, i| if probs[i] > probs[best] { i } else { best });
        Ok(PredictionResponse { log_probs, probs, predicted, model_version: self.version.clone() })
    }
}

#[derive(Default)]
pub struct ServiceConfig {
    pub model: Option<LoadedModel>,
    /// Where captured frames go; capture is disabled without one.
    pub dataset_dir: Option<PathBuf>,
    /// Static files (the browser client) served from `/`.
    pub static_dir: Option<PathBuf>,
}

struct AppState {
    model: Option<Arc<LoadedModel>>,
    dataset_dir: Option<PathBuf>,
    counter: AtomicU64,
}

pub fn router(config: ServiceConfig) -> Router {
    let state = Arc::new(AppState {
        model: config.model.map(Arc::new),
        dataset_dir: config.dataset_dir,
        counter: AtomicU64::new(0),
    });
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/predict", post(predict))
        .route("/api/dataset/{label}", post(save_frame))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state);
    match config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, config: ServiceConfig) -> io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        log::info!("listening on http://{addr}");
    }
    axum::serve(listener, router(config)).await
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    match &state.model {
        Some(m) => Json(HealthResponse { status: "ok", model_version: Some(m.version.clone()) }).into_response(),
        None => (StatusCode::SERVICE_UNAVAILABLE, Json(HealthResponse { status: "no-model", model_version: None }))
            .into_response(),
    }
}

async fn predict(
    State(state): State<Arc<AppState>>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Json<PredictionResponse>, ApiError> {
    let body = body?;
    let model = state.model.clone().ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no model loaded"))?;
    let out = tokio::task::spawn_blocking(move || model.predict_png(&body))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(out))
}

async fn save_frame(
    State(state): State<Arc<AppState>>,
    UrlPath(label): UrlPath<String>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Json<SavedResponse>, ApiError> {
    let body = body?;
    let dir = state.dataset_dir.clone().ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "dataset capture is disabled"))?;
    let label: usize = label
        .parse()
        .ok()
        .filter(|&l| l < NUM_LABELS)
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, format!("label must be 0..{}", NUM_LABELS - 1)))?;
    Image::decode_png(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let state = state.clone();
    let path = tokio::task::spawn_blocking(move || store(&dir, label, &body, &state.counter))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    log::info!("stored {path}");
    Ok(Json(SavedResponse { path }))
}

/// Writes `dir/<label>/<millis>-<counter>.png`, never replacing a file.
fn store(dir: &Path, label: usize, png: &[u8], counter: &AtomicU64) -> io::Result<String> {
    use std::io::Write;
    let sub = dir.join(label.to_string());
    std::fs::create_dir_all(&sub)?;
    let millis = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
    loop {
        let name = format!("{millis}-{}.png", counter.fetch_add(1, Ordering::Relaxed));
        match std::fs::OpenOptions::new().write(true).create_new(true).open(sub.join(&name)) {
            Ok(mut f) => {
                f.write_all(png)?;
                return Ok(format!("{label}/{name}"));
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
}
