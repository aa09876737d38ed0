//! HTTP service for the gateway wire protocol.
//!
//! Every request goes through a [`Gateway`], so the service applies the
//! same request and reply checks as in-process callers. Backend calls run
//! on the blocking pool.

use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use promptlab_core::gateway::protocol::{
    ErrorPayload, HealthResponse, EMBED_PATH, HEALTH_PATH, MASKFILL_PATH, SCORE_PATH,
};
use promptlab_core::gateway::{
    Backend, EmbedRequest, EmbedResponse, Gateway, GatewayError, MaskFillRequest, MaskFillResponse, ScoreRequest,
    ScoreResponse,
};
use tokio::net::TcpListener;

#[derive(Clone)]
struct AppState {
    gateway: Arc<Gateway>,
}

pub struct ApiError(GatewayError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            GatewayError::Precondition(_) => (StatusCode::BAD_REQUEST, "precondition"),
            GatewayError::Vocabulary(_) => (StatusCode::UNPROCESSABLE_ENTITY, "vocabulary"),
            GatewayError::Protocol(_) => (StatusCode::BAD_GATEWAY, "protocol"),
            GatewayError::Transport(_) => (StatusCode::SERVICE_UNAVAILABLE, "transport"),
            GatewayError::Cache(_) => (StatusCode::INTERNAL_SERVER_ERROR, "cache"),
        };
        tracing::warn!(%status, "request failed: {}", self.0);
        (status, Json(ErrorPayload { error: self.0.to_string(), kind: kind.into() })).into_response()
    }
}

async fn blocking<T, F>(state: AppState, f: F) -> Result<Json<T>, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Gateway) -> Result<T, GatewayError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&state.gateway))
        .await
        .map_err(|e| ApiError(GatewayError::Transport(format!("worker failed: {e}"))))?
        .map(Json)
        .map_err(ApiError)
}

async fn score(State(state): State<AppState>, Json(req): Json<ScoreRequest>) -> Result<Json<ScoreResponse>, ApiError> {
    blocking(state, move |gw| Ok(ScoreResponse { log_scores: gw.score_completions(&req)? })).await
}

async fn mask_fill(
    State(state): State<AppState>,
    Json(req): Json<MaskFillRequest>,
) -> Result<Json<MaskFillResponse>, ApiError> {
    blocking(state, move |gw| gw.mask_fill(&req)).await
}

async fn embed(State(state): State<AppState>, Json(req): Json<EmbedRequest>) -> Result<Json<EmbedResponse>, ApiError> {
    blocking(state, move |gw| {
        let vectors = gw.embed_texts(&req)?;
        let dim = vectors.first().map_or(0, Vec::len);
        Ok(EmbedResponse { vectors, dim })
    })
    .await
}

async fn health(State(state): State<AppState>) -> Json<HealthResponse> {
    let id = state.gateway.backend_id();
    Json(HealthResponse { status: "ok".into(), backend_id: id.clone(), models: vec![id] })
}

pub fn router(backend: Arc<dyn Backend>) -> Router {
    let state = AppState { gateway: Arc::new(Gateway::new(backend)) };
    Router::new()
        .route(SCORE_PATH, post(score))
        .route(MASKFILL_PATH, post(mask_fill))
        .route(EMBED_PATH, post(embed))
        .route(HEALTH_PATH, get(health))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve<F>(listener: TcpListener, backend: Arc<dyn Backend>, shutdown: F) -> std::io::Result<()>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(backend)).with_graceful_shutdown(shutdown).await
}
