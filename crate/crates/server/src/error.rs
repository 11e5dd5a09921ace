use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use viva_core::engine::EngineError;
use viva_core::exam::ExamError;
use viva_core::guard::IngestError;
use viva_core::session::TransitionError;
use viva_core::transcript::StoreError;

/// JSON error body `{ "error": code, "message": text }` with a status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    pub fn unauthenticated() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "Unauthenticated", "missing or unknown bearer token")
    }

    pub fn forbidden() -> Self {
        Self::new(StatusCode::FORBIDDEN, "Unauthorized", "this token may not perform this request")
    }

    pub fn not_found() -> Self {
        Self::new(StatusCode::NOT_FOUND, "UnknownSession", "no such session")
    }

    pub fn invalid_config(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "InvalidConfig", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(err: StoreError) -> Self {
        let (status, code) = match &err {
            StoreError::UnknownSession(_) => (StatusCode::NOT_FOUND, "UnknownSession"),
            StoreError::SessionExists(_) => (StatusCode::CONFLICT, "SessionExists"),
            StoreError::SessionSealed(_) | StoreError::HeaderExists(_) => (StatusCode::CONFLICT, "WrongState"),
            StoreError::StorageFailure(_) => (StatusCode::INTERNAL_SERVER_ERROR, "StorageFailure"),
        };
        Self::new(status, code, err.to_string())
    }
}

impl From<ExamError> for ApiError {
    fn from(err: ExamError) -> Self {
        let message = err.to_string();
        let (status, code) = match err {
            ExamError::Config(_) | ExamError::UnknownProvider(_) => (StatusCode::BAD_REQUEST, "InvalidConfig"),
            ExamError::Ingest(IngestError::UnsupportedFormat(_)) => {
                (StatusCode::UNSUPPORTED_MEDIA_TYPE, "UnsupportedFormat")
            }
            ExamError::Ingest(IngestError::OversizeSubmission { .. }) => {
                (StatusCode::PAYLOAD_TOO_LARGE, "OversizeSubmission")
            }
            ExamError::Ingest(IngestError::EmptySubmission) => (StatusCode::UNPROCESSABLE_ENTITY, "EmptySubmission"),
            ExamError::Ingest(IngestError::InvalidEncoding(_)) => (StatusCode::UNPROCESSABLE_ENTITY, "InvalidEncoding"),
            ExamError::Transition(TransitionError::EmptyPayload(_)) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "EmptyAnswer")
            }
            ExamError::Transition(_) => (StatusCode::CONFLICT, "WrongState"),
            ExamError::Engine(EngineError::ProviderUnavailable { .. }) => {
                (StatusCode::SERVICE_UNAVAILABLE, "ProviderUnavailable")
            }
            ExamError::Engine(EngineError::ProtocolExhausted { .. }) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "ProtocolExhausted")
            }
            ExamError::Engine(_) => (StatusCode::CONFLICT, "WrongState"),
            ExamError::AnswerTimeout(_) => (StatusCode::CONFLICT, "AnswerTimeout"),
            ExamError::Store(store) => return store.into(),
            ExamError::Replay(_) => (StatusCode::INTERNAL_SERVER_ERROR, "Internal"),
        };
        Self::new(status, code, message)
    }
}
