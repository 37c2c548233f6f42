use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::desk::{ReviewDesk, ReviewError, Reviewer};
use super::model::ReviewKind;
use crate::corpus::{RecordId, StoreError};

#[derive(Clone)]
struct AppState {
    desk: Arc<ReviewDesk>,
    tokens: Arc<HashMap<String, Reviewer>>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let status = match &e {
            ReviewError::TaskNotFound(_) | ReviewError::ItemNotFound(_) => StatusCode::NOT_FOUND,
            ReviewError::DuplicateVerdict { .. }
            | ReviewError::Closed { .. }
            | ReviewError::DuplicateTask { .. }
            | ReviewError::NotUnderReview { .. } => StatusCode::CONFLICT,
            ReviewError::Schema(_) | ReviewError::Rule(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ReviewError::Store(StoreError::Invalid(_) | StoreError::DanglingReference(_)) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ReviewError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

type ApiResult = Result<Response, ApiError>;

fn authenticate(state: &AppState, headers: &HeaderMap) -> Result<Reviewer, ApiError> {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "missing bearer token"))?;
    state
        .tokens
        .get(token)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unknown token"))
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: Option<String>,
    kind: Option<String>,
}

async fn next_task(State(state): State<AppState>, headers: HeaderMap, Query(q): Query<NextQuery>) -> ApiResult {
    let reviewer = authenticate(&state, &headers)?;
    if q.annotator.as_deref().is_some_and(|a| a != reviewer.id) {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "token does not belong to this annotator"));
    }
    let kind = match q.kind.as_deref().filter(|k| !k.is_empty()) {
        None => None,
        Some(k) => Some(
            ReviewKind::parse(k)
                .ok_or_else(|| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("unknown kind {k}")))?,
        ),
    };
    match state.desk.next_task(&reviewer, kind)? {
        Some(view) => Ok(Json(view).into_response()),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "no task available")),
    }
}

async fn get_task(State(state): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    authenticate(&state, &headers)?;
    Ok(Json(state.desk.task_view(&RecordId::new(id))?).into_response())
}

async fn post_verdict(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult {
    let reviewer = authenticate(&state, &headers)?;
    let value: serde_json::Value = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("body is not JSON: {e}")))?;
    let ack = state.desk.submit_verdict(&reviewer, &RecordId::new(id), value)?;
    Ok(Json(ack).into_response())
}

async fn get_item(State(state): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    authenticate(&state, &headers)?;
    Ok(Json(state.desk.item_view(&RecordId::new(id))?).into_response())
}

async fn progress(State(state): State<AppState>, headers: HeaderMap) -> ApiResult {
    authenticate(&state, &headers)?;
    Ok(Json(state.desk.progress()).into_response())
}

async fn export_gold(State(state): State<AppState>, headers: HeaderMap) -> ApiResult {
    authenticate(&state, &headers)?;
    Ok(Json(state.desk.export_gold()).into_response())
}

/// Routes of the review service. `tokens` maps bearer tokens to reviewers.
pub fn router(desk: Arc<ReviewDesk>, tokens: HashMap<String, Reviewer>) -> Router {
    Router::new()
        .route("/tasks/next", get(next_task))
        .route("/tasks/{id}", get(get_task))
        .route("/tasks/{id}/verdicts", post(post_verdict))
        .route("/items/{id}", get(get_item))
        .route("/progress", get(progress))
        .route("/export/gold", get(export_gold))
        .with_state(AppState { desk, tokens: Arc::new(tokens) })
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, router: Router) -> std::io::Result<()> {
    axum::serve(listener, router).await
}
