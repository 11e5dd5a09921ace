use crate::app::{AppState, SessionSlot};
use crate::auth::{Principal, Role};
use crate::error::ApiError;
use crate::events::event_stream;
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, Method, StatusCode};
use axum::response::sse::{KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use std::sync::Arc;
use viva_core::exam::Turn;
use viva_core::session::{SessionId, SessionState};
use viva_core::transcript::{ExportFormat, TranscriptDocument};
use viva_core::ExamConfig;

/// Every role-guarded endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    CreateSession,
    ListSessions,
    SessionStatus,
    Submit,
    Answer,
    Resume,
    Events,
    Assessment,
    Abort,
    Export,
}

impl Endpoint {
    pub const ALL: [Endpoint; 10] = [
        Endpoint::CreateSession,
        Endpoint::ListSessions,
        Endpoint::SessionStatus,
        Endpoint::Submit,
        Endpoint::Answer,
        Endpoint::Resume,
        Endpoint::Events,
        Endpoint::Assessment,
        Endpoint::Abort,
        Endpoint::Export,
    ];

    /// The allow table.
    pub fn allowed(self) -> &'static [Role] {
        use Role::*;
        match self {
            Endpoint::CreateSession => &[Assessor],
            Endpoint::ListSessions => &[Invigilator, Assessor],
            Endpoint::SessionStatus => &[Student, Invigilator, Assessor],
            Endpoint::Submit | Endpoint::Answer | Endpoint::Resume => &[Student],
            Endpoint::Events => &[Invigilator, Assessor],
            Endpoint::Assessment | Endpoint::Export => &[Assessor],
            Endpoint::Abort => &[Invigilator],
        }
    }

    pub fn method(self) -> Method {
        match self {
            Endpoint::ListSessions
            | Endpoint::SessionStatus
            | Endpoint::Events
            | Endpoint::Assessment
            | Endpoint::Export => Method::GET,
            _ => Method::POST,
        }
    }

    /// Request path, with `id` substituted for session-scoped endpoints.
    pub fn path(self, id: &str) -> String {
        match self {
            Endpoint::CreateSession | Endpoint::ListSessions => "/sessions".to_string(),
            Endpoint::SessionStatus => format!("/sessions/{id}"),
            Endpoint::Submit => format!("/sessions/{id}/submission"),
            Endpoint::Answer => format!("/sessions/{id}/answers"),
            Endpoint::Resume => format!("/sessions/{id}/resume"),
            Endpoint::Events => format!("/sessions/{id}/events"),
            Endpoint::Assessment => format!("/sessions/{id}/assessment"),
            Endpoint::Abort => format!("/sessions/{id}/abort"),
            Endpoint::Export => format!("/sessions/{id}/export"),
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(session_status))
        .route("/sessions/{id}/submission", post(submit))
        .route("/sessions/{id}/answers", post(answer))
        .route("/sessions/{id}/resume", post(resume))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/assessment", get(assessment))
        .route("/sessions/{id}/abort", post(abort))
        .route("/sessions/{id}/export", get(export))
        .with_state(state)
}

fn authorize(state: &AppState, headers: &HeaderMap, endpoint: Endpoint) -> Result<Principal, ApiError> {
    let principal = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .and_then(|token| state.tokens.resolve(token.trim()))
        .ok_or_else(ApiError::unauthenticated)?;
    if !endpoint.allowed().contains(&principal.role()) {
        return Err(ApiError::forbidden());
    }
    Ok(principal)
}

/// Authorizes `endpoint` on session `id` and returns its slot.
fn scoped(
    state: &AppState,
    headers: &HeaderMap,
    endpoint: Endpoint,
    id: &str,
) -> Result<(Principal, Arc<SessionSlot>), ApiError> {
    let principal = authorize(state, headers, endpoint)?;
    let slot = SessionId::new(id).ok().and_then(|id| state.session(&id));
    let Some(slot) = slot else {
        return Err(match principal {
            Principal::Student { .. } => ApiError::forbidden(),
            Principal::Staff { .. } => ApiError::not_found(),
        });
    };
    if !principal.covers(&slot.id, &slot.cohort) {
        return Err(ApiError::forbidden());
    }
    Ok((principal, slot))
}

async fn healthz() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let principal = authorize(&state, &headers, Endpoint::CreateSession)?;
    let Principal::Staff { cohort, .. } = &principal else { return Err(ApiError::forbidden()) };
    let mut body: Value = if body.iter().all(u8::is_ascii_whitespace) {
        json!({})
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::invalid_config(e.to_string()))?
    };
    let object = body.as_object_mut().ok_or_else(|| ApiError::invalid_config("body must be a JSON object"))?;
    let id = match object.remove("session_id") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(SessionId::new(s).map_err(|e| ApiError::invalid_config(e.to_string()))?),
        Some(_) => return Err(ApiError::invalid_config("session_id must be a string")),
    };
    let config: ExamConfig = serde_json::from_value(body).map_err(|e| ApiError::invalid_config(e.to_string()))?;
    config.validate().map_err(|e| ApiError::invalid_config(e.to_string()))?;
    let (slot, token) = state.create_session(id, config.clone(), cohort)?;
    let body = json!({
        "session_id": slot.id,
        "student_token": token,
        "state": slot.summary().state,
        "config": config,
    });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

#[derive(Debug, Deserialize)]
struct Page {
    #[serde(default)]
    offset: usize,
    #[serde(default = "default_limit")]
    limit: usize,
}

fn default_limit() -> usize {
    100
}

const MAX_PAGE: usize = 1000;

async fn list_sessions(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(page): Query<Page>,
) -> Result<Json<Value>, ApiError> {
    let principal = authorize(&state, &headers, Endpoint::ListSessions)?;
    let visible = state.visible_sessions(&principal);
    let limit = page.limit.clamp(1, MAX_PAGE);
    let sessions: Vec<_> = visible.iter().skip(page.offset).take(limit).map(|s| s.summary()).collect();
    Ok(Json(json!({
        "total": visible.len(),
        "offset": page.offset,
        "limit": limit,
        "sessions": sessions,
    })))
}

async fn session_status(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let (_, slot) = scoped(&state, &headers, Endpoint::SessionStatus, &id)?;
    let summary = slot.summary();
    Ok(Json(json!({
        "session_id": summary.session_id,
        "state": summary.state,
        "questions_asked": summary.questions_asked,
        "questions_remaining": summary.questions_remaining,
        "current_question": slot.current_question(),
    })))
}

/// Student-facing rendering of an examiner turn. Verdict content is withheld.
fn turn_response(slot: &SessionSlot, turn: Turn) -> Result<Value, ApiError> {
    let summary = slot.summary();
    match turn {
        Turn::Question(question) => Ok(json!({
            "status": "question",
            "question": question,
            "questions_asked": summary.questions_asked,
            "questions_remaining": summary.questions_remaining,
        })),
        Turn::Verdict(_) => Ok(json!({ "status": "concluded" })),
        Turn::Aborted(reason) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "ProtocolExhausted", reason)),
    }
}

async fn submit(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let (_, slot) = scoped(&state, &headers, Endpoint::Submit, &id)?;
    let format = headers
        .get(header::CONTENT_TYPE)
        .map(|v| v.to_str().unwrap_or("invalid").to_string())
        .unwrap_or_else(|| "text/plain".to_string());
    let (submission, turn) = slot
        .run(move |exam| {
            let submission = exam.submit(&body, &format)?;
            Ok((submission, exam.advance()))
        })
        .await?;
    let mut response = turn_response(&slot, turn.map_err(ApiError::from)?)?;
    response["submission"] = json!({
        "sha256": submission.original_digest,
        "word_count": submission.word_count,
    });
    Ok(Json(response))
}

fn text_body(headers: &HeaderMap, body: &[u8], field: &str) -> Result<String, ApiError> {
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    if is_json {
        let value: Value = serde_json::from_slice(body)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "InvalidBody", e.to_string()))?;
        return match value.get(field) {
            Some(Value::String(s)) => Ok(s.clone()),
            None | Some(Value::Null) => Ok(String::new()),
            Some(_) => Err(ApiError::new(StatusCode::BAD_REQUEST, "InvalidBody", format!("{field} must be a string"))),
        };
    }
    String::from_utf8(body.to_vec())
        .map_err(|_| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "InvalidEncoding", "body is not valid UTF-8"))
}

async fn answer(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let (_, slot) = scoped(&state, &headers, Endpoint::Answer, &id)?;
    let text = text_body(&headers, &body, "answer")?;
    if text.trim().is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "EmptyAnswer", "answer must not be empty"));
    }
    let turn = slot
        .run(move |exam| {
            exam.answer(&text)?;
            exam.advance()
        })
        .await?;
    Ok(Json(turn_response(&slot, turn)?))
}

async fn resume(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let (_, slot) = scoped(&state, &headers, Endpoint::Resume, &id)?;
    let turn = slot.run(|exam| exam.advance()).await?;
    Ok(Json(turn_response(&slot, turn)?))
}

async fn events(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let (_, slot) = scoped(&state, &headers, Endpoint::Events, &id)?;
    let from = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map_or(0, |last| last + 1);
    let stream = event_stream(Arc::clone(&slot.log), from);
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()).into_response())
}

async fn assessment(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let (_, slot) = scoped(&state, &headers, Endpoint::Assessment, &id)?;
    let summary = slot.summary();
    if !summary.state.is_terminal() {
        return Err(ApiError::new(StatusCode::CONFLICT, "NotConcluded", format!("session is {}", summary.state)));
    }
    let doc = TranscriptDocument::from_store(&state.services.store, &slot.id)?;
    let chain = slot.log.verify();
    let flags = doc.submission.as_ref().map(|s| s.sanitized.flags.clone()).unwrap_or_default();
    let abort_reason = slot.run(|exam| Ok(exam.session().abort_reason.clone())).await?;
    Ok(Json(json!({
        "session_id": slot.id,
        "state": summary.state,
        "questions_asked": summary.questions_asked,
        "confidence_score": doc.verdict.as_ref().map(|v| v.confidence_score()),
        "verdict": doc.verdict,
        "abort_reason": abort_reason,
        "flags": flags,
        "chain": chain,
        "exports": {
            "json": format!("/sessions/{}/export?format=json", slot.id),
            "text": format!("/sessions/{}/export?format=text", slot.id),
        },
    })))
}

#[derive(Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn export(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Query(query): Query<ExportQuery>,
) -> Result<Response, ApiError> {
    let (_, slot) = scoped(&state, &headers, Endpoint::Export, &id)?;
    let format: ExportFormat = query
        .format
        .as_deref()
        .unwrap_or("json")
        .parse()
        .map_err(|e: viva_core::transcript::ExportError| ApiError::new(StatusCode::BAD_REQUEST, "UnsupportedFormat", e.to_string()))?;
    let doc = TranscriptDocument::from_store(&state.services.store, &slot.id)?;
    let content_type = match format {
        ExportFormat::Json => "application/json",
        ExportFormat::Text => "text/plain; charset=utf-8",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], doc.render(format)).into_response())
}

async fn abort(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let (_, slot) = scoped(&state, &headers, Endpoint::Abort, &id)?;
    let reason = text_body(&headers, &body, "reason")?;
    slot.run(move |exam| exam.abort(&reason)).await?;
    Ok(Json(json!({ "session_id": slot.id, "state": SessionState::Aborted })))
}
