//! JSON-over-HTTP routes for the session store.
//!
//! | method | path                          | body / query            |
//! |--------|-------------------------------|-------------------------|
//! | GET    | `/images`                     |                         |
//! | POST   | `/sessions`                   | `{"image_id": ...}`     |
//! | POST   | `/sessions/{id}/utterances`   | `{"text": ...}`         |
//! | GET    | `/sessions/{id}/image`        | `?variant=current\|overlay\|original` |
//! | GET    | `/sessions/{id}/state`        |                         |
//! | GET    | `/sessions/{id}/log`          |                         |
//! | DELETE | `/sessions/{id}`              |                         |
//!
//! Errors are `{"error": kind, "message": text}` with 400, 404 or 409.
//! Turns for one session run one at a time; a concurrent utterance for the
//! same session waits for the turn in flight.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use slotedit_core::service::{ImageVariant, ServiceError, SessionStore};

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateSession {
    pub image_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
}

#[derive(Debug, Deserialize)]
pub struct ImageQuery {
    variant: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn bad_body(message: String) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, kind: "bad_body", message }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError {
            status: StatusCode::from_u16(e.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR),
            kind: error_kind(&e),
            message: e.to_string(),
        }
    }
}

fn error_kind(e: &ServiceError) -> &'static str {
    match e {
        ServiceError::UnknownImage(_) => "unknown_image",
        ServiceError::UnknownSession(_) => "unknown_session",
        ServiceError::SessionClosed(_) => "session_closed",
        ServiceError::EmptyUtterance => "empty_utterance",
        ServiceError::NoMask => "no_mask",
        ServiceError::BadVariant(_) => "bad_variant",
        ServiceError::Internal(_) => "internal",
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(error = %self.message, "request failed");
        }
        let body = ErrorBody { error: self.kind.to_string(), message: self.message };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs a store call off the async workers; turns and PNG encoding are CPU
/// bound and may wait on a session lock.
async fn blocking<T: Send + 'static>(
    store: &Arc<SessionStore>,
    f: impl FnOnce(&SessionStore) -> Result<T, ServiceError> + Send + 'static,
) -> ApiResult<T> {
    let store = Arc::clone(store);
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
        .map_err(ApiError::from)
}

/// Parses a JSON body by hand so that a missing or malformed body is always a 400.
fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_body(format!("invalid request body: {e}")))
}

async fn list_images(State(store): State<Arc<SessionStore>>) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "images": store.list_images() }))
}

async fn create_session(
    State(store): State<Arc<SessionStore>>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let body: CreateSession = parse_body(&body)?;
    let descriptor = store.create_session(&body.image_id)?;
    tracing::info!(session = %descriptor.session_id, image = %descriptor.image_id, "session opened");
    Ok((StatusCode::CREATED, Json(descriptor)))
}

async fn post_utterance(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Err(ServiceError::EmptyUtterance.into());
    }
    let body: Utterance = parse_body(&body)?;
    let response = blocking(&store, move |s| s.post_utterance(&id, &body.text)).await?;
    Ok(Json(response))
}

async fn get_image(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    Query(q): Query<ImageQuery>,
) -> ApiResult<impl IntoResponse> {
    let variant = match q.variant.as_deref() {
        None => ImageVariant::Current,
        Some(v) => v.parse()?,
    };
    let png = blocking(&store, move |s| s.get_image(&id, variant)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png"), (header::CACHE_CONTROL, "no-store")], png))
}

async fn get_state(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&store, move |s| s.get_state(&id)).await?))
}

async fn get_log(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&store, move |s| s.get_log(&id)).await?))
}

async fn close_session(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let log = blocking(&store, move |s| s.close_session(&id)).await?;
    tracing::info!(session = %log.session_id, records = log.records.len(), "session closed");
    Ok(Json(log))
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/images", get(list_images))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", delete(close_session))
        .route("/sessions/{id}/utterances", post(post_utterance))
        .route("/sessions/{id}/image", get(get_image))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/log", get(get_log))
        .with_state(store)
}
