#![allow(dead_code)]

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use std::sync::Arc;
use tower::ServiceExt;
use viva_core::exam::ExamServices;
use viva_core::transcript::TranscriptStore;
use viva_server::{router, AppState, Principal, Role, TokenRegistry};

pub const ASSESSOR: &str = "assessor-a";
pub const INVIGILATOR: &str = "invigilator-a";
pub const OTHER_ASSESSOR: &str = "assessor-b";
pub const OTHER_INVIGILATOR: &str = "invigilator-b";

pub const ESSAY: &str = "The prosbul was a legal device that allowed creditors to recover loans despite the \
    sabbatical year release. Later readers took the petition about debts in the prayer as an economic demand \
    rather than a purely spiritual metaphor. The story of the pitiless servant dramatizes an enormous debt \
    forgiven and a small one enforced without mercy.";

pub const LONG_ANSWER: &str = "I argued this because the economic setting of the period makes a literal \
    reading of debt unavoidable, and the legal device shows that contemporaries were already negotiating \
    around the release, which the teaching then confronts directly.";

pub fn tokens() -> TokenRegistry {
    let tokens = TokenRegistry::new();
    for (token, role, cohort) in [
        (ASSESSOR, Role::Assessor, "a"),
        (INVIGILATOR, Role::Invigilator, "a"),
        (OTHER_ASSESSOR, Role::Assessor, "b"),
        (OTHER_INVIGILATOR, Role::Invigilator, "b"),
    ] {
        tokens.insert(token, Principal::Staff { role, cohort: cohort.into() });
    }
    tokens
}

pub struct Harness {
    pub state: Arc<AppState>,
    pub app: Router,
}

impl Harness {
    pub fn new() -> Self {
        Self::with_services(ExamServices::new(Arc::new(TranscriptStore::in_memory())))
    }

    pub fn with_services(services: ExamServices) -> Self {
        Self::with_state(AppState::new(services, tokens()))
    }

    pub fn with_state(state: AppState) -> Self {
        let state = Arc::new(state);
        Self { app: router(Arc::clone(&state)), state }
    }

    pub async fn send(&self, request: Request<Body>) -> (StatusCode, Vec<u8>) {
        let response = self.app.clone().oneshot(request).await.unwrap();
        let status = response.status();
        let body = response.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, body)
    }

    pub async fn call(
        &self,
        method: &str,
        path: &str,
        token: Option<&str>,
        content_type: Option<&str>,
        body: impl Into<Body>,
    ) -> (StatusCode, Value) {
        let (status, bytes) = self.send(request(method, path, token, content_type, body)).await;
        let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
        (status, value)
    }

    pub async fn create(&self, body: &str) -> (String, String) {
        let (status, value) = self.call("POST", "/sessions", Some(ASSESSOR), Some("application/json"), body.to_string()).await;
        assert_eq!(status, StatusCode::CREATED, "{value}");
        (value["session_id"].as_str().unwrap().to_string(), value["student_token"].as_str().unwrap().to_string())
    }

    pub async fn submit(&self, id: &str, token: &str, essay: &str) -> (StatusCode, Value) {
        self.call("POST", &format!("/sessions/{id}/submission"), Some(token), Some("text/plain"), essay.to_string())
            .await
    }

    pub async fn answer(&self, id: &str, token: &str, answer: &str) -> (StatusCode, Value) {
        self.call("POST", &format!("/sessions/{id}/answers"), Some(token), Some("text/plain"), answer.to_string())
            .await
    }

    /// Runs a session end to end, returning every student-facing response body.
    pub async fn complete(&self, id: &str, token: &str, essay: &str, answer: &str) -> Vec<Value> {
        let (status, mut last) = self.submit(id, token, essay).await;
        assert_eq!(status, StatusCode::OK, "{last}");
        let mut seen = vec![last.clone()];
        while last["status"] == "question" {
            let (status, next) = self.answer(id, token, answer).await;
            assert_eq!(status, StatusCode::OK, "{next}");
            seen.push(next.clone());
            last = next;
        }
        assert_eq!(last["status"], "concluded");
        seen
    }
}

pub fn request(
    method: &str,
    path: &str,
    token: Option<&str>,
    content_type: Option<&str>,
    body: impl Into<Body>,
) -> Request<Body> {
    let mut builder = Request::builder().method(method).uri(path);
    if let Some(token) = token {
        builder = builder.header("authorization", format!("Bearer {token}"));
    }
    if let Some(ct) = content_type {
        builder = builder.header("content-type", ct);
    }
    builder.body(body.into()).unwrap()
}

/// Parses a complete `text/event-stream` body into (event, id, data) triples.
pub fn parse_sse(body: &str) -> Vec<(String, Option<u64>, String)> {
    let mut events = Vec::new();
    for block in body.split("\n\n") {
        let mut event = None;
        let mut id = None;
        let mut data = Vec::new();
        for line in block.lines() {
            if let Some(v) = line.strip_prefix("event:") {
                event = Some(v.trim().to_string());
            } else if let Some(v) = line.strip_prefix("id:") {
                id = v.trim().parse().ok();
            } else if let Some(v) = line.strip_prefix("data:") {
                data.push(v.strip_prefix(' ').unwrap_or(v).to_string());
            }
        }
        if let Some(event) = event {
            events.push((event, id, data.join("\n")));
        }
    }
    events
}
