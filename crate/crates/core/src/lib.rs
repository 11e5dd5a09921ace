//! Virtual viva voce examinations.
//!
//! A session examines a candidate on a submitted essay: the submission is
//! sanitized and scanned for injected instructions, an examiner model asks a
//! bounded number of questions grounded in the text, and the session ends with
//! a structured verdict. Every turn is recorded in a hash-chained transcript.

pub mod clock;
pub mod config;
pub mod engine;
pub mod exam;
pub mod guard;
pub mod session;
pub mod transcript;

pub use clock::{Clock, SteppingClock, SystemClock, Timestamp};
pub use config::{ConfigError, ExamConfig};
pub use engine::{
    classify_output, next_turn, EngineError, EngineOutput, FinalAssessment, MockProvider, ProviderError,
    ProviderPort,
};
pub use exam::{ExamError, ExamServices, Examination, Turn};
pub use guard::{ingest, sanitize, IngestError, InjectionFlag, RawSubmission, SanitizedSubmission, Severity};
pub use session::{create_session, EventContext, ExamSession, SessionEvent, SessionId, SessionState, TransitionError};
pub use transcript::{
    export, verify_chain_parts, ChainReport, Role, TranscriptDocument, TranscriptEntry, TranscriptStore,
};
