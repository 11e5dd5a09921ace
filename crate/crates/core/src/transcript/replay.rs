use super::entry::{Role, SystemNotice, TranscriptEntry};
use super::export::{verdict_of, TranscriptDocument};
use super::store::StoredHeader;
use crate::config::ConfigError;
use crate::guard::SanitizedSubmission;
use crate::session::{create_session, EventContext, ExamSession, SessionEvent, TransitionError};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("transcript has no header")]
    MissingHeader,
    #[error("header config is invalid: {0}")]
    Config(#[from] ConfigError),
    #[error("entry {seq} cannot be interpreted")]
    MalformedEntry { seq: u64 },
    #[error("entry {seq} is rejected by the session protocol: {source}")]
    Transition { seq: u64, source: TransitionError },
}

/// The session event recorded by `entry`, if any. Notes and conclusion
/// instructions carry no event.
pub fn event_of(
    entry: &TranscriptEntry,
    submission: &Arc<SanitizedSubmission>,
) -> Result<Option<SessionEvent>, ReplayError> {
    let malformed = || ReplayError::MalformedEntry { seq: entry.seq };
    Ok(match entry.role {
        Role::Examiner => Some(SessionEvent::QuestionIssued(entry.content.clone())),
        Role::Candidate => Some(SessionEvent::AnswerReceived(entry.content.clone())),
        Role::Verdict => Some(SessionEvent::VerdictIssued(verdict_of(entry).ok_or_else(malformed)?)),
        Role::Note => None,
        Role::System => match SystemNotice::parse(&entry.content).ok_or_else(malformed)? {
            SystemNotice::SubmissionAccepted { .. } => Some(SessionEvent::SubmissionAccepted(Arc::clone(submission))),
            SystemNotice::Conclude(_) => None,
            SystemNotice::Timeout { .. } => Some(SessionEvent::Timeout),
            SystemNotice::Aborted(reason) => Some(SessionEvent::Abort(reason)),
        },
    })
}

/// Rebuilds session state by re-applying every recorded event in order.
pub fn replay(stored: &StoredHeader, entries: &[TranscriptEntry]) -> Result<ExamSession, ReplayError> {
    let header = &stored.header;
    let submission = Arc::new(stored.submission.sanitized.clone());
    let mut session = create_session(header.session_id.clone(), header.config.clone(), header.created_at)?;
    for entry in entries {
        if let Some(event) = event_of(entry, &submission)? {
            let ctx = EventContext { seq: entry.seq, at: entry.timestamp };
            session = session
                .transition(&event, ctx)
                .map_err(|source| ReplayError::Transition { seq: entry.seq, source })?;
        }
    }
    Ok(session)
}

pub fn replay_document(doc: &TranscriptDocument) -> Result<ExamSession, ReplayError> {
    let stored = doc.stored_header().ok_or(ReplayError::MissingHeader)?;
    replay(&stored, &doc.entries)
}
