use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tower_http::services::ServeDir;

use crate::batch::load_or_build_batch;
use crate::store::{AnnotationStore, StoreError, Submission};

pub const TOKEN_HEADER: &str = "x-annotation-token";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub run_dir: PathBuf,
    pub required_annotators: usize,
    /// Shared secret every API request must carry in `x-annotation-token`.
    pub token: Option<String>,
    /// Directory with the built annotation UI, served at `/`.
    pub ui_dir: Option<PathBuf>,
    pub reservation_ttl: Duration,
    /// Shuffle seed for a newly built batch.
    pub seed: u64,
}

impl ServiceConfig {
    pub fn new(run_dir: impl Into<PathBuf>) -> Self {
        Self {
            run_dir: run_dir.into(),
            required_annotators: 9,
            token: None,
            ui_dir: None,
            reservation_ttl: Duration::from_secs(600),
            seed: 0,
        }
    }

    pub fn open_store(&self) -> Result<AnnotationStore, StoreError> {
        let batch = load_or_build_batch(&self.run_dir, self.seed)?;
        AnnotationStore::open(
            batch,
            &self.run_dir.join(negcomp_core::experiment::LABELS_FILE),
            self.required_annotators,
            self.reservation_ttl,
            crate::INSTRUCTIONS,
        )
    }
}

#[derive(Clone)]
struct AppState {
    store: Arc<AnnotationStore>,
    token: Option<Arc<str>>,
}

struct ApiError(StoreError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            StoreError::EmptyAnnotator => (StatusCode::BAD_REQUEST, "empty_annotator"),
            StoreError::UnknownAnswer(_) => (StatusCode::NOT_FOUND, "unknown_answer"),
            StoreError::UnknownBatch(_) => (StatusCode::NOT_FOUND, "unknown_batch"),
            StoreError::Duplicate { .. } => (StatusCode::CONFLICT, "duplicate"),
            StoreError::NotServed { .. } => (StatusCode::CONFLICT, "not_served"),
            StoreError::AnswerComplete(_) => (StatusCode::CONFLICT, "answer_complete"),
            StoreError::Storage(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
        };
        if status.is_server_error() {
            tracing::error!(error = %self.0, "annotation store failure");
        }
        (status, Json(serde_json::json!({ "error": self.0.to_string(), "kind": kind }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError(e)
    }
}

#[derive(Deserialize)]
struct NextQuery {
    #[serde(default)]
    annotator: String,
}

#[derive(Deserialize)]
struct BatchQuery {
    batch: Option<String>,
}

async fn next_task(State(app): State<AppState>, Query(q): Query<NextQuery>) -> Result<Response, ApiError> {
    Ok(match app.store.next_task(&q.annotator)? {
        Some(task) => Json(task).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn submit(State(app): State<AppState>, Json(sub): Json<Submission>) -> Result<Response, ApiError> {
    let store = app.store.clone();
    let ack = tokio::task::spawn_blocking(move || store.submit(&sub))
        .await
        .map_err(|e| ApiError(StoreError::Storage(negcomp_core::Error::Config(e.to_string()))))??;
    Ok((StatusCode::CREATED, Json(ack)).into_response())
}

async fn progress(State(app): State<AppState>, Query(q): Query<BatchQuery>) -> Result<Response, ApiError> {
    Ok(Json(app.store.progress(q.batch.as_deref())?).into_response())
}

async fn export(State(app): State<AppState>, Query(q): Query<BatchQuery>) -> Result<Response, ApiError> {
    Ok(Json(app.store.export(q.batch.as_deref())?).into_response())
}

async fn instructions(State(app): State<AppState>) -> Response {
    (
        [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
        app.store.instructions().to_string(),
    )
        .into_response()
}

async fn placeholder() -> Html<&'static str> {
    Html("<!doctype html><title>Annotation service</title><p>The labeling API is under <code>/api</code>. Start the service with a UI directory to serve the labeling interface here.</p>")
}

async fn require_token(State(app): State<AppState>, headers: HeaderMap, request: Request, next: Next) -> Response {
    if let Some(expected) = &app.token {
        let given = headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok());
        if given != Some(expected.as_ref()) {
            return (
                StatusCode::UNAUTHORIZED,
                Json(serde_json::json!({ "error": "missing or wrong annotation token", "kind": "unauthorized" })),
            )
                .into_response();
        }
    }
    next.run(request).await
}

pub fn router(store: Arc<AnnotationStore>, token: Option<String>, ui_dir: Option<PathBuf>) -> Router {
    let state = AppState {
        store,
        token: token.map(Arc::from),
    };
    let api = Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/labels", post(submit))
        .route("/api/progress", get(progress))
        .route("/api/export", get(export))
        .route("/api/instructions", get(instructions))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    }
}

/// Serves the API on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    config: ServiceConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), StoreError> {
    let store = Arc::new(config.open_store()?);
    let app = router(store, config.token.clone(), config.ui_dir.clone());
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| StoreError::Storage(negcomp_core::Error::Io {
            path: config.run_dir.clone(),
            source: e,
        }))
}
