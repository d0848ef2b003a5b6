//! JSON over HTTP.
//!
//! | route | body | response |
//! |---|---|---|
//! | `POST /classify` | [`ClassifyRequest`]: `tweet_id` or inline `tweet` (alias `payload`), optional `user` | [`ClassifyResponse`] |
//! | `POST /feedback` | [`FeedbackRequest`]: `tweet_id`, `user_label` (`"fake"`/`"genuine"`), optional `user_id` | [`FeedbackRecord`] |
//! | `GET /health` | none | [`Health`] |
//!
//! Errors are `{"error": "..."}` with 404 for unknown tweets, 422 for
//! malformed requests and 500 otherwise.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use super::{ClassifyRequest, ClassifyResponse, FeedbackRecord, FeedbackRequest, Health, Service};
use crate::error::Error;

pub struct ApiError(StatusCode, String);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Invalid(_) | Error::Empty(_) | Error::Json(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError(StatusCode::UNPROCESSABLE_ENTITY, r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> crate::Result<T> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => Ok(Json(r?)),
        Err(e) => Err(ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
    }
}

async fn classify(State(svc): State<Arc<Service>>, body: Result<Json<ClassifyRequest>, JsonRejection>) -> ApiResult<ClassifyResponse> {
    let Json(req) = body?;
    blocking(move || svc.classify(&req)).await
}

async fn feedback(State(svc): State<Arc<Service>>, body: Result<Json<FeedbackRequest>, JsonRejection>) -> ApiResult<FeedbackRecord> {
    let Json(req) = body?;
    blocking(move || svc.submit_feedback(&req)).await
}

async fn health(State(svc): State<Arc<Service>>) -> Json<Health> {
    Json(svc.health())
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/classify", post(classify))
        .route("/feedback", post(feedback))
        .route("/health", get(health))
        .with_state(service)
}

/// Serves until the process is stopped.
pub fn serve(service: Arc<Service>, addr: SocketAddr) -> crate::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| Error::Http(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| Error::Http(format!("bind {addr}: {e}")))?;
        log::info!("listening on {addr}");
        axum::serve(listener, router(service)).await.map_err(|e| Error::Http(e.to_string()))
    })
}
