use crate::auth::{Principal, TokenFileError, TokenRegistry};
use crate::config::{ServiceConfig, ServiceConfigError};
use crate::error::ApiError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Instant;
use thiserror::Error;
use tokio::sync::Mutex;
use viva_core::clock::{Clock, SteppingClock, Timestamp};
use viva_core::engine::LiveProvider;
use viva_core::exam::{ExamError, ExamServices, Examination};
use viva_core::guard::{RuleSet, RulesError};
use viva_core::session::{SessionId, SessionState};
use viva_core::transcript::{Role, SessionLog, StoreError, TranscriptStore};
use viva_core::ExamConfig;

const META_FILE: &str = "session.json";

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Config(#[from] ServiceConfigError),
    #[error(transparent)]
    Tokens(#[from] TokenFileError),
    #[error(transparent)]
    Rules(#[from] RulesError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot restore session {id}: {source}")]
    Restore { id: SessionId, source: ExamError },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Persisted alongside each durable transcript so sessions survive restarts.
#[derive(Debug, Serialize, Deserialize)]
struct SessionMeta {
    cohort: String,
    config: ExamConfig,
    student_token_sha256: String,
}

/// Cheap view of a session, refreshed after every operation so listings
/// never wait on an in-flight provider call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionSummary {
    pub session_id: SessionId,
    pub cohort: String,
    pub state: SessionState,
    pub questions_asked: u32,
    pub questions_remaining: u32,
    pub flag_count: usize,
    pub high_severity_flags: usize,
}

pub struct SessionSlot {
    pub id: SessionId,
    pub cohort: String,
    pub log: Arc<SessionLog>,
    exam: Arc<Mutex<Examination>>,
    summary: RwLock<SessionSummary>,
}

impl SessionSlot {
    fn new(exam: Examination, cohort: String) -> Arc<Self> {
        let summary = summarize(&exam, &cohort);
        Arc::new(Self {
            id: exam.session_id().clone(),
            log: Arc::clone(exam.log()),
            cohort,
            exam: Arc::new(Mutex::new(exam)),
            summary: RwLock::new(summary),
        })
    }

    pub fn summary(&self) -> SessionSummary {
        self.summary.read().unwrap().clone()
    }

    /// The question awaiting an answer, if any.
    pub fn current_question(&self) -> Option<String> {
        if self.summary().state != SessionState::AwaitingAnswer {
            return None;
        }
        self.log.entries().into_iter().rev().find(|e| e.role == Role::Examiner).map(|e| e.content)
    }

    /// Runs `op` on the examination off the async runtime. Operations on the
    /// same session are serialized; other sessions proceed independently.
    pub async fn run<T, F>(self: &Arc<Self>, op: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&mut Examination) -> Result<T, ExamError> + Send + 'static,
    {
        let mut exam = Arc::clone(&self.exam).lock_owned().await;
        let slot = Arc::clone(self);
        tokio::task::spawn_blocking(move || {
            let result = op(&mut exam);
            *slot.summary.write().unwrap() = summarize(&exam, &slot.cohort);
            result
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(ApiError::from)
    }
}

fn summarize(exam: &Examination, cohort: &str) -> SessionSummary {
    let session = exam.session();
    let (flag_count, high_severity_flags) = session
        .submission
        .as_ref()
        .map_or((0, 0), |s| (s.flag_count(), s.high_severity_count()));
    SessionSummary {
        session_id: session.session_id.clone(),
        cohort: cohort.to_string(),
        state: session.state,
        questions_asked: session.questions_asked,
        questions_remaining: session.question_budget_remaining(),
        flag_count,
        high_severity_flags,
    }
}

pub struct AppState {
    pub services: ExamServices,
    pub tokens: TokenRegistry,
    sessions: RwLock<BTreeMap<SessionId, Arc<SessionSlot>>>,
    deterministic_start: Option<Timestamp>,
}

impl AppState {
    pub fn new(services: ExamServices, tokens: TokenRegistry) -> Self {
        Self { services, tokens, sessions: RwLock::new(BTreeMap::new()), deterministic_start: None }
    }

    /// Gives every new session a private stepping clock starting at `start`.
    pub fn with_deterministic_clock(mut self, start: Timestamp) -> Self {
        self.deterministic_start = Some(start);
        self
    }

    /// Builds the state described by `config`, restoring durable sessions.
    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServerError> {
        let store = match &config.store_path {
            Some(path) => TranscriptStore::open(path)?,
            None => TranscriptStore::in_memory(),
        };
        let mut services = ExamServices::new(Arc::new(store));
        services.max_submission_bytes = config.max_submission_bytes;
        if let Some(path) = &config.rules_path {
            services = services.with_rules(RuleSet::load(path)?);
        }
        if let Some(live) = &config.live {
            services.register(Arc::new(LiveProvider::new(live.clone())));
        }
        let tokens = match &config.tokens_path {
            Some(path) => TokenRegistry::load(path)?,
            None => TokenRegistry::new(),
        };
        let mut state = Self::new(services, tokens);
        state.deterministic_start = config.deterministic_start()?;
        state.restore_sessions()?;
        Ok(state)
    }

    fn meta_path(&self, id: &SessionId) -> Option<PathBuf> {
        self.services.store.root().map(|root| root.join(id.as_str()).join(META_FILE))
    }

    fn restore_sessions(&self) -> Result<(), ServerError> {
        for id in self.services.store.session_ids() {
            let Some(path) = self.meta_path(&id) else { continue };
            let Ok(bytes) = std::fs::read(&path) else {
                tracing::warn!(session = %id, "no session metadata; not restored");
                continue;
            };
            let meta: SessionMeta = serde_json::from_slice(&bytes).map_err(std::io::Error::other)?;
            let exam = Examination::restore(&self.services, &id, meta.config)
                .map_err(|source| ServerError::Restore { id: id.clone(), source })?;
            self.tokens.insert_digest(meta.student_token_sha256, Principal::Student { session: id.clone() });
            self.sessions.write().unwrap().insert(id, SessionSlot::new(exam, meta.cohort));
        }
        Ok(())
    }

    /// Creates a session in `cohort`, returning its slot and the student token.
    pub fn create_session(
        &self,
        id: Option<SessionId>,
        config: ExamConfig,
        cohort: &str,
    ) -> Result<(Arc<SessionSlot>, String), ApiError> {
        let id = id.unwrap_or_else(SessionId::random);
        let exam = match self.deterministic_start {
            Some(start) => {
                let clock: Arc<dyn Clock> = Arc::new(SteppingClock::new(start));
                Examination::create_with_clock(&self.services, id.clone(), config.clone(), clock)?
            }
            None => Examination::create(&self.services, id.clone(), config.clone())?,
        };
        let (token, digest) = self.tokens.issue_student(&id);
        if let Some(path) = self.meta_path(&id) {
            let meta = SessionMeta { cohort: cohort.to_string(), config, student_token_sha256: digest };
            write_meta(&path, &meta).map_err(|e| ApiError::internal(e.to_string()))?;
        }
        let slot = SessionSlot::new(exam, cohort.to_string());
        self.sessions.write().unwrap().insert(id, Arc::clone(&slot));
        Ok((slot, token))
    }

    pub fn session(&self, id: &SessionId) -> Option<Arc<SessionSlot>> {
        self.sessions.read().unwrap().get(id).cloned()
    }

    /// Sessions visible to `principal`, ordered by id.
    pub fn visible_sessions(&self, principal: &Principal) -> Vec<Arc<SessionSlot>> {
        self.sessions
            .read()
            .unwrap()
            .values()
            .filter(|slot| principal.covers(&slot.id, &slot.cohort))
            .cloned()
            .collect()
    }

    /// Aborts every session whose answer window has closed. Sessions busy
    /// with another request are checked on the next sweep.
    pub async fn sweep_timeouts(&self, now: Instant) -> usize {
        let candidates: Vec<Arc<SessionSlot>> = self
            .sessions
            .read()
            .unwrap()
            .values()
            .filter(|slot| slot.summary().state == SessionState::AwaitingAnswer)
            .cloned()
            .collect();
        let mut expired = 0;
        for slot in candidates {
            let Ok(mut exam) = Arc::clone(&slot.exam).try_lock_owned() else { continue };
            let target = Arc::clone(&slot);
            let result = tokio::task::spawn_blocking(move || {
                let result = exam.expire_at(now);
                *target.summary.write().unwrap() = summarize(&exam, &target.cohort);
                result
            })
            .await;
            if let Ok(Ok(true)) = result {
                expired += 1;
            }
        }
        expired
    }
}

impl Default for AppState {
    fn default() -> Self {
        Self::new(ExamServices::new(Arc::new(TranscriptStore::in_memory())), TokenRegistry::new())
    }
}

fn write_meta(path: &Path, meta: &SessionMeta) -> std::io::Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(meta).map_err(std::io::Error::other)?)
}
