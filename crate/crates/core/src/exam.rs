//! Drives one examination: guard, state machine, engine and transcript.
//!
//! Every event is written ahead: the successor state is computed, the
//! transcript entry is appended, and only then is the state committed. A
//! failed append leaves the session untouched.

use crate::clock::{Clock, SystemClock};
use crate::config::{ConfigError, ExamConfig};
use crate::engine::{
    next_turn, Attempt, EngineError, EngineOutput, FinalAssessment, MockProvider, ProviderPort,
    CONCLUDE_INSTRUCTION, PROMPT_TEMPLATE_VERSION,
};
use crate::guard::{
    ingest_with_limit, sanitize_with, strip_controls, IngestError, RuleSet, SanitizedSubmission,
    DEFAULT_MAX_SUBMISSION_BYTES,
};
use crate::session::{
    create_session, EventContext, ExamSession, SessionEvent, SessionId, SessionState, TransitionError,
};
use crate::transcript::{
    replay, ReplayError, Role, SessionLog, StoreError, StoredHeader, SubmissionRecord, SystemNotice,
    TranscriptHeader, TranscriptStore, HASH_ALGORITHM,
};
use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExamError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("unknown provider {0:?}")]
    UnknownProvider(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("the answer window closed after {0} s; the session was aborted")]
    AnswerTimeout(u64),
}

/// Shared dependencies of every examination.
#[derive(Clone)]
pub struct ExamServices {
    pub store: Arc<TranscriptStore>,
    pub providers: BTreeMap<String, Arc<dyn ProviderPort>>,
    pub clock: Arc<dyn Clock>,
    pub rules: Arc<RuleSet>,
    pub max_submission_bytes: usize,
}

impl ExamServices {
    /// In-memory store, system clock, built-in rules and the mock provider.
    pub fn new(store: Arc<TranscriptStore>) -> Self {
        let mut services = Self {
            store,
            providers: BTreeMap::new(),
            clock: Arc::new(SystemClock),
            rules: Arc::new(RuleSet::builtin().clone()),
            max_submission_bytes: DEFAULT_MAX_SUBMISSION_BYTES,
        };
        services.register(Arc::new(MockProvider::new()));
        services
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_rules(mut self, rules: RuleSet) -> Self {
        self.rules = Arc::new(rules);
        self
    }

    pub fn register(&mut self, provider: Arc<dyn ProviderPort>) {
        self.providers.insert(provider.provider_id().to_string(), provider);
    }

    pub fn with_provider(mut self, provider: Arc<dyn ProviderPort>) -> Self {
        self.register(provider);
        self
    }

    pub fn provider(&self, id: &str) -> Result<Arc<dyn ProviderPort>, ExamError> {
        self.providers.get(id).cloned().ok_or_else(|| ExamError::UnknownProvider(id.to_string()))
    }
}

/// What the examiner (or the protocol) produced on a turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Turn {
    Question(String),
    Verdict(FinalAssessment),
    Aborted(String),
}

pub struct Examination {
    services: ExamServices,
    provider: Arc<dyn ProviderPort>,
    clock: Arc<dyn Clock>,
    log: Arc<SessionLog>,
    session: ExamSession,
    answer_started: Option<Instant>,
}

impl Examination {
    pub fn create(services: &ExamServices, session_id: SessionId, config: ExamConfig) -> Result<Self, ExamError> {
        Self::create_with_clock(services, session_id, config, Arc::clone(&services.clock))
    }

    /// Like [`Examination::create`] but with a clock private to this session.
    pub fn create_with_clock(
        services: &ExamServices,
        session_id: SessionId,
        config: ExamConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, ExamError> {
        let provider = services.provider(&config.provider_id)?;
        let session = create_session(session_id.clone(), config, clock.now())?;
        let log = services.store.create(&session_id)?;
        Ok(Self { services: services.clone(), provider, clock, log, session, answer_started: None })
    }

    /// Reattaches to a stored session, replaying its transcript. Sessions that
    /// never received a submission restart from `config`.
    pub fn restore(services: &ExamServices, session_id: &SessionId, config: ExamConfig) -> Result<Self, ExamError> {
        let log = services.store.get(session_id)?;
        let session = match log.header() {
            Some(stored) => replay(&stored, &log.entries())?,
            None => create_session(session_id.clone(), config, services.clock.now())?,
        };
        let provider = services.provider(&session.config.provider_id)?;
        let answer_started = (session.state == SessionState::AwaitingAnswer).then(Instant::now);
        let clock = Arc::clone(&services.clock);
        Ok(Self { services: services.clone(), provider, clock, log, session, answer_started })
    }

    pub fn session(&self) -> &ExamSession {
        &self.session
    }

    pub fn session_id(&self) -> &SessionId {
        &self.session.session_id
    }

    pub fn state(&self) -> SessionState {
        self.session.state
    }

    pub fn log(&self) -> &Arc<SessionLog> {
        &self.log
    }

    /// When the current answer window closes, if one is open. Timeouts too
    /// large to represent never close.
    pub fn answer_deadline(&self) -> Option<Instant> {
        let window = Duration::from_secs(self.session.config.answer_timeout_secs);
        self.answer_started.and_then(|t| t.checked_add(window))
    }

    fn context(&self) -> EventContext {
        EventContext { seq: self.log.next_seq(), at: self.clock.now() }
    }

    fn apply(&mut self, event: SessionEvent, content: &str) -> Result<(), ExamError> {
        let ctx = self.context();
        let next = self.session.transition(&event, ctx)?;
        let entry = self.log.append(event.role(), content, ctx.at)?;
        debug_assert_eq!(entry.seq, ctx.seq);
        self.session = next;
        self.answer_started = None;
        if self.session.state == SessionState::Aborted {
            self.log.seal()?;
        }
        Ok(())
    }

    fn note(&self, text: &str) -> Result<(), ExamError> {
        self.log.append(Role::Note, text, self.clock.now())?;
        Ok(())
    }

    /// Ingests, sanitizes and records the submission.
    pub fn submit(&mut self, bytes: &[u8], declared_format: &str) -> Result<Arc<SanitizedSubmission>, ExamError> {
        if self.session.state != SessionState::Created {
            return Err(TransitionError::InvalidTransition {
                state: self.session.state,
                event: crate::session::EventKind::SubmissionAccepted,
            }
            .into());
        }
        let raw = ingest_with_limit(bytes, declared_format, self.services.max_submission_bytes)?;
        let sanitized = Arc::new(sanitize_with(&raw, &self.services.rules));
        let header = TranscriptHeader {
            session_id: self.session.session_id.clone(),
            created_at: self.session.created_at,
            config: self.session.config.clone(),
            submission_digest: sanitized.original_digest.clone(),
            hash_algorithm: HASH_ALGORITHM.to_string(),
            rules_version: self.services.rules.version().to_string(),
            prompt_version: PROMPT_TEMPLATE_VERSION.to_string(),
            provider: self.provider.metadata(),
        };
        let notice = SystemNotice::SubmissionAccepted { digest: header.submission_digest.clone(), header_hash: header.hash() };
        let event = SessionEvent::SubmissionAccepted(Arc::clone(&sanitized));
        self.session.transition(&event, EventContext { seq: self.log.next_seq(), at: self.session.created_at })?;
        self.log.write_header(StoredHeader {
            header,
            submission: SubmissionRecord { raw: raw.as_str().to_string(), sanitized: (*sanitized).clone() },
        })?;
        self.apply(event, &notice.render())?;
        Ok(sanitized)
    }

    /// Runs the examiner for one turn.
    ///
    /// Provider outages leave the session where it was so the turn can be
    /// retried; exhausting the protocol retries aborts the session.
    pub fn advance(&mut self) -> Result<Turn, ExamError> {
        if self.session.state == SessionState::ConcludingForced && !self.conclude_sent() {
            let notice = SystemNotice::Conclude(CONCLUDE_INSTRUCTION.to_string()).render();
            self.log.append(Role::System, &notice, self.clock.now())?;
        }
        let result = next_turn(&self.session, &self.log.entries(), self.provider.as_ref());
        let attempts = match &result {
            Ok(report) => report.attempts.as_slice(),
            Err(err) => err.attempts(),
        };
        for attempt in attempts {
            match attempt {
                Attempt::Accepted { fenced: true } => self.note("examiner verdict arrived inside a code fence")?,
                Attempt::Accepted { fenced: false } => {}
                Attempt::Rejected { error, .. } => self.note(&format!("examiner output rejected: {error}"))?,
                Attempt::Failed(err) => self.note(&format!("provider call failed: {err}"))?,
            }
        }
        match result {
            Ok(report) => match report.output {
                EngineOutput::Question(question) => {
                    self.apply(SessionEvent::QuestionIssued(question.clone()), &question)?;
                    self.answer_started = Some(Instant::now());
                    Ok(Turn::Question(question))
                }
                EngineOutput::Verdict(verdict) => {
                    let json = verdict.to_json();
                    self.apply(SessionEvent::VerdictIssued(verdict.clone()), &json)?;
                    Ok(Turn::Verdict(verdict))
                }
                EngineOutput::Malformed { error, .. } => unreachable!("next_turn never accepts malformed output: {error}"),
            },
            Err(EngineError::ProtocolExhausted { error, .. }) => {
                let reason = format!("examiner protocol failure: {error}");
                self.abort(&reason)?;
                Ok(Turn::Aborted(reason))
            }
            Err(err) => Err(err.into()),
        }
    }

    fn conclude_sent(&self) -> bool {
        self.log
            .entries()
            .iter()
            .rev()
            .take_while(|e| e.role != Role::Candidate)
            .any(|e| matches!(SystemNotice::parse(&e.content), Some(SystemNotice::Conclude(_))) && e.role == Role::System)
    }

    /// Records the candidate's answer, unless the answer window has closed.
    pub fn answer(&mut self, text: &str) -> Result<(), ExamError> {
        self.answer_at(text, Instant::now())
    }

    pub fn answer_at(&mut self, text: &str, now: Instant) -> Result<(), ExamError> {
        if self.expire_at(now)? {
            return Err(ExamError::AnswerTimeout(self.session.config.answer_timeout_secs));
        }
        let text = strip_controls(text);
        self.apply(SessionEvent::AnswerReceived(text.clone()), &text)
    }

    /// Aborts the session if the answer window closed before `now`.
    pub fn expire_at(&mut self, now: Instant) -> Result<bool, ExamError> {
        match self.answer_deadline() {
            Some(deadline) if now > deadline && self.session.state == SessionState::AwaitingAnswer => {
                let notice = SystemNotice::Timeout { after_secs: self.session.config.answer_timeout_secs };
                self.apply(SessionEvent::Timeout, &notice.render())?;
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    pub fn abort(&mut self, reason: &str) -> Result<(), ExamError> {
        let reason = strip_controls(reason);
        let reason = if reason.trim().is_empty() { "aborted by invigilator".to_string() } else { reason };
        self.apply(SessionEvent::Abort(reason.clone()), &SystemNotice::Aborted(reason).render())
    }
}
