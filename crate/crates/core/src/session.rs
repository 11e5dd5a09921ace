//! Examination session state machine.
//!
//! Sessions are event-sourced: every accepted [`SessionEvent`] corresponds to
//! exactly one transcript entry, and replaying those entries through
//! [`ExamSession::transition`] rebuilds the session.

use crate::clock::{canonical, Timestamp};
use crate::config::{ConfigError, ExamConfig};
use crate::engine::FinalAssessment;
use crate::guard::SanitizedSubmission;
use crate::transcript::Role;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SessionId(String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid session id {0:?}: use 1-64 characters from [A-Za-z0-9._-], not starting with '.'")]
pub struct InvalidSessionId(pub String);

impl SessionId {
    pub fn new(id: impl Into<String>) -> Result<Self, InvalidSessionId> {
        let id = id.into();
        let ok = (1..=64).contains(&id.len())
            && !id.starts_with('.')
            && id.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'));
        if ok {
            Ok(Self(id))
        } else {
            Err(InvalidSessionId(id))
        }
    }

    pub fn random() -> Self {
        Self(uuid::Uuid::new_v4().to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for SessionId {
    type Error = InvalidSessionId;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<SessionId> for String {
    fn from(id: SessionId) -> Self {
        id.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for SessionId {
    type Err = InvalidSessionId;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SessionState {
    Created,
    /// Not entered by the current transition table.
    SubmissionIngested,
    AwaitingQuestion,
    AwaitingAnswer,
    ConcludingForced,
    Completed,
    Aborted,
}

impl SessionState {
    pub const ALL: [SessionState; 7] = [
        SessionState::Created,
        SessionState::SubmissionIngested,
        SessionState::AwaitingQuestion,
        SessionState::AwaitingAnswer,
        SessionState::ConcludingForced,
        SessionState::Completed,
        SessionState::Aborted,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, SessionState::Completed | SessionState::Aborted)
    }

    /// States in which the examiner is expected to speak next.
    pub fn expects_examiner(self) -> bool {
        matches!(self, SessionState::AwaitingQuestion | SessionState::ConcludingForced)
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionEvent {
    SubmissionAccepted(Arc<SanitizedSubmission>),
    QuestionIssued(String),
    AnswerReceived(String),
    VerdictIssued(FinalAssessment),
    Timeout,
    Abort(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    SubmissionAccepted,
    QuestionIssued,
    AnswerReceived,
    VerdictIssued,
    Timeout,
    Abort,
}

impl EventKind {
    pub const ALL: [EventKind; 6] = [
        EventKind::SubmissionAccepted,
        EventKind::QuestionIssued,
        EventKind::AnswerReceived,
        EventKind::VerdictIssued,
        EventKind::Timeout,
        EventKind::Abort,
    ];
}

impl SessionEvent {
    pub fn kind(&self) -> EventKind {
        match self {
            SessionEvent::SubmissionAccepted(_) => EventKind::SubmissionAccepted,
            SessionEvent::QuestionIssued(_) => EventKind::QuestionIssued,
            SessionEvent::AnswerReceived(_) => EventKind::AnswerReceived,
            SessionEvent::VerdictIssued(_) => EventKind::VerdictIssued,
            SessionEvent::Timeout => EventKind::Timeout,
            SessionEvent::Abort(_) => EventKind::Abort,
        }
    }

    /// Transcript role of the entry that records this event.
    pub fn role(&self) -> Role {
        match self {
            SessionEvent::QuestionIssued(_) => Role::Examiner,
            SessionEvent::AnswerReceived(_) => Role::Candidate,
            SessionEvent::VerdictIssued(_) => Role::Verdict,
            SessionEvent::SubmissionAccepted(_) | SessionEvent::Timeout | SessionEvent::Abort(_) => {
                Role::System
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransitionError {
    #[error("event {event:?} is not allowed in state {state}")]
    InvalidTransition { state: SessionState, event: EventKind },
    #[error("verdict issued after {asked} questions; at least {min} are required")]
    PrematureVerdict { asked: u32, min: u32 },
    #[error("{0:?} requires non-empty text")]
    EmptyPayload(EventKind),
}

/// Where the transcript entry backing an event sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventContext {
    pub seq: u64,
    pub at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRef {
    pub seq: u64,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamSession {
    pub session_id: SessionId,
    pub config: ExamConfig,
    pub state: SessionState,
    pub submission: Option<Arc<SanitizedSubmission>>,
    pub questions_asked: u32,
    pub turns: Vec<TurnRef>,
    pub verdict: Option<FinalAssessment>,
    pub abort_reason: Option<String>,
    #[serde(with = "canonical")]
    pub created_at: Timestamp,
    #[serde(with = "canonical::option")]
    pub concluded_at: Option<Timestamp>,
}

pub const TIMEOUT_REASON: &str = "answer timeout";

/// Validates `config` and opens a session in [`SessionState::Created`].
pub fn create_session(
    session_id: SessionId,
    config: ExamConfig,
    created_at: Timestamp,
) -> Result<ExamSession, ConfigError> {
    config.validate()?;
    Ok(ExamSession {
        session_id,
        config,
        state: SessionState::Created,
        submission: None,
        questions_asked: 0,
        turns: Vec::new(),
        verdict: None,
        abort_reason: None,
        created_at,
        concluded_at: None,
    })
}

impl ExamSession {
    /// Applies one event, returning the successor session. `self` is untouched.
    pub fn transition(&self, event: &SessionEvent, ctx: EventContext) -> Result<Self, TransitionError> {
        use SessionState::*;

        let kind = event.kind();
        let invalid = || TransitionError::InvalidTransition { state: self.state, event: kind };
        if self.state.is_terminal() {
            return Err(invalid());
        }
        if let SessionEvent::QuestionIssued(text) | SessionEvent::AnswerReceived(text) = event {
            if text.trim().is_empty() {
                return Err(TransitionError::EmptyPayload(kind));
            }
        }

        let mut next = self.clone();
        match (self.state, event) {
            (Created, SessionEvent::SubmissionAccepted(submission)) => {
                next.submission = Some(Arc::clone(submission));
                next.state = AwaitingQuestion;
            }
            (AwaitingQuestion, SessionEvent::QuestionIssued(_))
                if self.questions_asked < self.config.max_questions =>
            {
                next.questions_asked += 1;
                next.state = AwaitingAnswer;
            }
            (AwaitingAnswer, SessionEvent::AnswerReceived(_)) => {
                next.state = if self.questions_asked < self.config.max_questions {
                    AwaitingQuestion
                } else {
                    ConcludingForced
                };
            }
            (_, SessionEvent::VerdictIssued(verdict)) => {
                if self.questions_asked < self.config.min_questions {
                    return Err(TransitionError::PrematureVerdict {
                        asked: self.questions_asked,
                        min: self.config.min_questions,
                    });
                }
                next.verdict = Some(verdict.clone());
                next.state = Completed;
            }
            (_, SessionEvent::Timeout) => {
                next.abort_reason = Some(TIMEOUT_REASON.to_string());
                next.state = Aborted;
            }
            (_, SessionEvent::Abort(reason)) => {
                next.abort_reason = Some(reason.clone());
                next.state = Aborted;
            }
            _ => return Err(invalid()),
        }
        next.turns.push(TurnRef { seq: ctx.seq, role: event.role() });
        if next.state.is_terminal() {
            next.concluded_at = Some(ctx.at);
        }
        Ok(next)
    }

    pub fn question_budget_remaining(&self) -> u32 {
        self.config.max_questions.saturating_sub(self.questions_asked)
    }

    pub fn is_terminal(&self) -> bool {
        self.state.is_terminal()
    }

    /// Checks the structural invariants that must hold in every reachable state.
    pub fn check_invariants(&self) -> Result<(), String> {
        let examiner_turns = self.turns.iter().filter(|t| t.role == Role::Examiner).count() as u32;
        if examiner_turns != self.questions_asked {
            return Err(format!(
                "questions_asked {} != examiner turns {examiner_turns}",
                self.questions_asked
            ));
        }
        if self.questions_asked > self.config.max_questions {
            return Err(format!("questions_asked {} exceeds budget", self.questions_asked));
        }
        if self.verdict.is_some() != (self.state == SessionState::Completed) {
            return Err("verdict present iff Completed violated".into());
        }
        if self.state == SessionState::Completed && self.questions_asked < self.config.min_questions {
            return Err("completed below the question floor".into());
        }
        if self.state == SessionState::AwaitingAnswer && self.questions_asked == 0 {
            return Err("awaiting an answer before any question".into());
        }
        Ok(())
    }
}

pub fn question_budget_remaining(session: &ExamSession) -> u32 {
    session.question_budget_remaining()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::parse_timestamp;

    fn at(seq: u64) -> EventContext {
        EventContext { seq, at: parse_timestamp("2025-01-01T00:00:00.000000Z").unwrap() }
    }

    fn submission() -> Arc<SanitizedSubmission> {
        Arc::new(SanitizedSubmission {
            text: "An essay.".into(),
            flags: vec![],
            original_digest: "00".into(),
            word_count: 2,
        })
    }

    fn session(min: u32, max: u32) -> ExamSession {
        create_session(
            SessionId::new("s-1").unwrap(),
            ExamConfig::default().with_budget(min, max),
            at(0).at,
        )
        .unwrap()
    }

    fn verdict() -> FinalAssessment {
        FinalAssessment::new("x".repeat(250), 70).unwrap()
    }

    fn apply(mut s: ExamSession, events: &[SessionEvent]) -> Result<ExamSession, TransitionError> {
        for (i, e) in events.iter().enumerate() {
            s = s.transition(e, at(i as u64))?;
        }
        Ok(s)
    }

    #[test]
    fn create_session_examples() {
        let s = session(4, 5);
        assert_eq!(s.state, SessionState::Created);
        assert_eq!(s.questions_asked, 0);
        assert!(s.turns.is_empty() && s.verdict.is_none());
        assert_eq!(session(1, 1).state, SessionState::Created);
        assert!(matches!(
            create_session(SessionId::random(), ExamConfig::default().with_budget(5, 4), at(0).at),
            Err(ConfigError::QuestionBudget { min: 5, max: 4 })
        ));
    }

    #[test]
    fn submission_moves_to_awaiting_question() {
        let s = session(4, 5).transition(&SessionEvent::SubmissionAccepted(submission()), at(0)).unwrap();
        assert_eq!(s.state, SessionState::AwaitingQuestion);
        assert_eq!(s.turns, vec![TurnRef { seq: 0, role: Role::System }]);
    }

    #[test]
    fn last_answer_forces_conclusion() {
        let mut events = vec![SessionEvent::SubmissionAccepted(submission())];
        for _ in 0..5 {
            events.push(SessionEvent::QuestionIssued("Why?".into()));
            events.push(SessionEvent::AnswerReceived("Because.".into()));
        }
        let s = apply(session(4, 5), &events).unwrap();
        assert_eq!(s.state, SessionState::ConcludingForced);
        assert_eq!(s.questions_asked, 5);
        assert_eq!(s.question_budget_remaining(), 0);
        let done = s.transition(&SessionEvent::VerdictIssued(verdict()), at(11)).unwrap();
        assert_eq!(done.state, SessionState::Completed);
        assert_eq!(done.concluded_at, Some(at(11).at));
        done.check_invariants().unwrap();
    }

    #[test]
    fn terminal_states_absorb() {
        let mut events = vec![SessionEvent::SubmissionAccepted(submission())];
        for _ in 0..4 {
            events.push(SessionEvent::QuestionIssued("Why?".into()));
            events.push(SessionEvent::AnswerReceived("Because.".into()));
        }
        events.push(SessionEvent::VerdictIssued(verdict()));
        let done = apply(session(4, 5), &events).unwrap();
        assert_eq!(
            done.transition(&SessionEvent::AnswerReceived("late".into()), at(99)),
            Err(TransitionError::InvalidTransition {
                state: SessionState::Completed,
                event: EventKind::AnswerReceived
            })
        );
    }

    #[test]
    fn premature_verdict_is_rejected() {
        let events = vec![
            SessionEvent::SubmissionAccepted(submission()),
            SessionEvent::QuestionIssued("q1".into()),
            SessionEvent::AnswerReceived("a1".into()),
            SessionEvent::QuestionIssued("q2".into()),
            SessionEvent::AnswerReceived("a2".into()),
        ];
        let s = apply(session(4, 5), &events).unwrap();
        assert_eq!(s.state, SessionState::AwaitingQuestion);
        assert_eq!(
            s.transition(&SessionEvent::VerdictIssued(verdict()), at(9)),
            Err(TransitionError::PrematureVerdict { asked: 2, min: 4 })
        );
    }

    #[test]
    fn whitespace_payloads_are_rejected() {
        let s = apply(session(1, 1), &[SessionEvent::SubmissionAccepted(submission())]).unwrap();
        assert_eq!(
            s.transition(&SessionEvent::QuestionIssued(" \n\t".into()), at(1)),
            Err(TransitionError::EmptyPayload(EventKind::QuestionIssued))
        );
    }

    #[test]
    fn timeout_aborts_with_reason() {
        let events = vec![
            SessionEvent::SubmissionAccepted(submission()),
            SessionEvent::QuestionIssued("q1".into()),
            SessionEvent::Timeout,
        ];
        let s = apply(session(4, 5), &events).unwrap();
        assert_eq!(s.state, SessionState::Aborted);
        assert_eq!(s.abort_reason.as_deref(), Some(TIMEOUT_REASON));
        assert!(s.verdict.is_none());
    }

    #[test]
    fn budget_remaining_examples() {
        let mut s = session(4, 5);
        assert_eq!(question_budget_remaining(&s), 5);
        s.questions_asked = 3;
        assert_eq!(question_budget_remaining(&s), 2);
        s.questions_asked = 5;
        assert_eq!(question_budget_remaining(&s), 0);
        s.questions_asked = 7;
        assert_eq!(question_budget_remaining(&s), 0);
    }

    #[test]
    fn session_ids() {
        assert!(SessionId::new("cand-0042.a_b").is_ok());
        for bad in ["", ".hidden", "a/b", "white space", &"x".repeat(65)] {
            assert!(SessionId::new(bad).is_err(), "{bad}");
        }
        let id: SessionId = serde_json::from_str("\"abc\"").unwrap();
        assert_eq!(id.as_str(), "abc");
        assert!(serde_json::from_str::<SessionId>("\"../x\"").is_err());
    }
}
