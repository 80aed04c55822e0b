use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use factaudit_core::evalkit::AnnotationRecord;
use serde::Deserialize;

use crate::app::{CheckOverrides, CreateSession, ReviewService};
use crate::error::ServiceError;
use crate::session::Verdict;
use crate::views::{SessionSummary, SessionView};

#[derive(Debug, Deserialize)]
pub struct VerdictRequest {
    pub sentence_index: usize,
    #[serde(flatten)]
    pub verdict: Verdict,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRequest {
    pub text: String,
    #[serde(default)]
    pub expected_text: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct ListQuery {
    pub doc_id: Option<String>,
}

type ApiResult<T> = Result<T, ServiceError>;

fn json_body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    match payload {
        Ok(Json(v)) => Ok(v),
        Err(e) if e.status() == StatusCode::PAYLOAD_TOO_LARGE => Err(ServiceError::PayloadTooLarge(e.body_text())),
        Err(e) => Err(ServiceError::BadRequest(e.body_text())),
    }
}

fn path<T>(p: Result<Path<T>, PathRejection>) -> ApiResult<T> {
    p.map(|Path(v)| v).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> ApiResult<T> {
    q.map(|Query(v)| v).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

fn jsonl(records: &[AnnotationRecord]) -> ApiResult<Response> {
    let mut body = String::new();
    for r in records {
        body.push_str(&serde_json::to_string(r).map_err(|e| ServiceError::Corrupt(e.to_string()))?);
        body.push('\n');
    }
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn create(
    State(svc): State<ReviewService>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let session = svc.create(json_body(payload)?).await?;
    Ok((StatusCode::CREATED, Json(SessionView::from(&session))))
}

async fn list(State(svc): State<ReviewService>, q: Result<Query<ListQuery>, QueryRejection>) -> ApiResult<Json<Vec<SessionSummary>>> {
    let q = query(q)?;
    let sessions = svc.list(q.doc_id.as_deref()).await;
    Ok(Json(sessions.iter().map(SessionSummary::from).collect()))
}

async fn get_session(State(svc): State<ReviewService>, id: Result<Path<String>, PathRejection>) -> ApiResult<Json<SessionView>> {
    let session = svc.get(&path(id)?).await?;
    Ok(Json(SessionView::from(&session)))
}

async fn check(
    State(svc): State<ReviewService>,
    p: Result<Path<(String, usize)>, PathRejection>,
    q: Result<Query<CheckOverrides>, QueryRejection>,
) -> ApiResult<Response> {
    let (id, index) = path(p)?;
    let view = svc.check(&id, index, query(q)?).await?;
    Ok(Json(view).into_response())
}

async fn check_all(
    State(svc): State<ReviewService>,
    id: Result<Path<String>, PathRejection>,
    q: Result<Query<CheckOverrides>, QueryRejection>,
) -> ApiResult<Json<serde_json::Value>> {
    let id = path(id)?;
    Ok(Json(svc.check_all(&id, query(q)?).await?))
}

async fn verdict(
    State(svc): State<ReviewService>,
    id: Result<Path<String>, PathRejection>,
    payload: Result<Json<VerdictRequest>, JsonRejection>,
) -> ApiResult<Json<SessionView>> {
    let id = path(id)?;
    let req = json_body(payload)?;
    let session = svc.verdict(&id, req.sentence_index, req.verdict).await?;
    Ok(Json(SessionView::from(&session)))
}

async fn edit(
    State(svc): State<ReviewService>,
    p: Result<Path<(String, usize)>, PathRejection>,
    payload: Result<Json<EditRequest>, JsonRejection>,
) -> ApiResult<Json<SessionView>> {
    let (id, index) = path(p)?;
    let req = json_body(payload)?;
    let session = svc.edit(&id, index, req.text, req.expected_text).await?;
    Ok(Json(SessionView::from(&session)))
}

async fn annotations(State(svc): State<ReviewService>, id: Result<Path<String>, PathRejection>) -> ApiResult<Response> {
    jsonl(&svc.annotations(&path(id)?).await?)
}

async fn all_annotations(State(svc): State<ReviewService>) -> ApiResult<Response> {
    jsonl(&svc.all_annotations().await)
}

async fn fallback() -> ServiceError {
    ServiceError::NotFound("no such route".into())
}

pub fn router(service: ReviewService) -> Router {
    let limit = service.config().max_payload_bytes;
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create).get(list))
        .route("/sessions/:id", get(get_session))
        .route("/sessions/:id/check/:idx", post(check))
        .route("/sessions/:id/check-all", post(check_all))
        .route("/sessions/:id/verdict", post(verdict))
        .route("/sessions/:id/sentence/:idx", put(edit))
        .route("/sessions/:id/annotations", get(annotations))
        .route("/annotations", get(all_annotations))
        .fallback(fallback)
        .layer(DefaultBodyLimit::max(limit))
        .with_state(service)
}

/// Binds `config.bind` and serves until the process is stopped.
pub async fn serve(service: ReviewService) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&service.config().bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(service)).await
}
