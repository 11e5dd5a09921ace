//! Examiner engine: prompt assembly, provider turns, and verdict validation.

mod classify;
mod live;
mod mock;
mod prompt;

pub use classify::{classify, classify_output, Classification, ParseError};
pub use live::{LiveConfig, LiveProvider, ENV_API_KEY, ENV_ENDPOINT, ENV_MODEL, ENV_TEMPERATURE};
pub use mock::{MockProvider, ScriptedProvider, MOCK_MODEL};
pub use prompt::{
    build_bundle, build_system_prompt, document_message, CONCLUDE_INSTRUCTION, DOCUMENT_END,
    DOCUMENT_START, PROMPT_TEMPLATE_VERSION,
};

use crate::session::ExamSession;
use crate::session::SessionState;
use crate::transcript::TranscriptEntry;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum length, in characters, of a "paragraph-long" assessment.
pub const MIN_ASSESSMENT_CHARS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerdictError {
    #[error("confidence_score {0} is outside 0..=100")]
    ScoreOutOfRange(i64),
    #[error("assessment has {0} characters; at least {MIN_ASSESSMENT_CHARS} are required")]
    AssessmentTooShort(usize),
}

/// The examiner's closing verdict.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "VerdictWire", deny_unknown_fields)]
pub struct FinalAssessment {
    assessment: String,
    confidence_score: u8,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerdictWire {
    assessment: String,
    confidence_score: i64,
}

impl TryFrom<VerdictWire> for FinalAssessment {
    type Error = VerdictError;
    fn try_from(wire: VerdictWire) -> Result<Self, Self::Error> {
        Self::from_parts(wire.assessment, wire.confidence_score)
    }
}

impl FinalAssessment {
    pub fn new(assessment: impl Into<String>, confidence_score: u8) -> Result<Self, VerdictError> {
        Self::from_parts(assessment.into(), confidence_score.into())
    }

    pub fn from_parts(assessment: String, confidence_score: i64) -> Result<Self, VerdictError> {
        let score = u8::try_from(confidence_score)
            .ok()
            .filter(|s| *s <= 100)
            .ok_or(VerdictError::ScoreOutOfRange(confidence_score))?;
        let chars = assessment.trim().chars().count();
        if chars < MIN_ASSESSMENT_CHARS {
            return Err(VerdictError::AssessmentTooShort(chars));
        }
        Ok(Self { assessment, confidence_score: score })
    }

    pub fn assessment(&self) -> &str {
        &self.assessment
    }

    pub fn confidence_score(&self) -> u8 {
        self.confidence_score
    }

    /// The two-key JSON object, keys in protocol order.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("verdict serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EngineOutput {
    Question(String),
    Verdict(FinalAssessment),
    Malformed { raw: String, error: ParseError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptRole {
    /// The delimited submission document.
    Submission,
    Examiner,
    Candidate,
    /// Engine-issued instruction inside the conversation.
    Instruction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: PromptRole,
    pub content: String,
}

impl Message {
    pub fn new(role: PromptRole, content: impl Into<String>) -> Self {
        Self { role, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_prompt: String,
    pub conversation: Vec<Message>,
}

impl PromptBundle {
    pub fn count(&self, role: PromptRole) -> usize {
        self.conversation.iter().filter(|m| m.role == role).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("provider transport failure: {0}")]
    Transport(String),
    #[error("provider misconfigured: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderMetadata {
    pub provider_id: String,
    pub model: String,
}

/// A completion backend. Implementations are interchangeable.
pub trait ProviderPort: Send + Sync {
    fn provider_id(&self) -> &str;
    fn model(&self) -> &str;
    fn complete(&self, bundle: &PromptBundle) -> Result<String, ProviderError>;

    fn metadata(&self) -> ProviderMetadata {
        ProviderMetadata { provider_id: self.provider_id().to_string(), model: self.model().to_string() }
    }
}

/// One provider call made during [`next_turn`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Attempt {
    Accepted { fenced: bool },
    Rejected { raw: String, error: ParseError },
    Failed(ProviderError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnReport {
    /// Either [`EngineOutput::Question`] or [`EngineOutput::Verdict`].
    pub output: EngineOutput,
    pub attempts: Vec<Attempt>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("the examiner does not speak in state {0}")]
    NotExaminerTurn(SessionState),
    #[error("session has no submission")]
    MissingSubmission,
    #[error("provider unavailable after {} attempts: {last}", attempts.len())]
    ProviderUnavailable { last: ProviderError, attempts: Vec<Attempt> },
    #[error("provider output still malformed after {} attempts: {error}", attempts.len())]
    ProtocolExhausted { raw: String, error: ParseError, attempts: Vec<Attempt> },
}

impl EngineError {
    pub fn attempts(&self) -> &[Attempt] {
        match self {
            EngineError::ProviderUnavailable { attempts, .. }
            | EngineError::ProtocolExhausted { attempts, .. } => attempts,
            _ => &[],
        }
    }
}

fn correction(error: &ParseError) -> String {
    match error {
        ParseError::Premature { asked, min } => format!(
            "A verdict is not permitted yet: {asked} of at least {min} questions have been asked. \
             Continue the examination with your next single question."
        ),
        ParseError::QuestionAfterConclusion => CONCLUDE_INSTRUCTION.to_string(),
        other => format!(
            "Your last message could not be accepted ({other}). Reply with either a single question, \
             or, if the questioning is complete, ONLY a JSON object with exactly the keys \
             \"assessment\" (a paragraph-long string) and \"confidence_score\" (an integer from 0 to 100). \
             Do not include any other text or markdown formatting."
        ),
    }
}

/// Asks the provider for the examiner's next message.
///
/// `history` is the session transcript so far. Malformed output, premature
/// verdicts and questions after the conclusion instruction are retried with a
/// corrective instruction; the provider is called at most
/// `1 + max_provider_retries` times.
pub fn next_turn(
    session: &ExamSession,
    history: &[TranscriptEntry],
    provider: &dyn ProviderPort,
) -> Result<TurnReport, EngineError> {
    if !session.state.expects_examiner() {
        return Err(EngineError::NotExaminerTurn(session.state));
    }
    let mut bundle = build_bundle(session, history)?;
    let mut attempts = Vec::new();
    let mut last_failure = None;

    for _ in 0..=session.config.max_provider_retries {
        let raw = match provider.complete(&bundle) {
            Ok(raw) => raw,
            Err(err) => {
                attempts.push(Attempt::Failed(err.clone()));
                last_failure = Some(Err(err));
                continue;
            }
        };
        let Classification { output, fenced } = classify(&raw);
        let error = match output {
            EngineOutput::Verdict(_) if session.questions_asked < session.config.min_questions => {
                ParseError::Premature { asked: session.questions_asked, min: session.config.min_questions }
            }
            EngineOutput::Question(_) if session.state == SessionState::ConcludingForced => {
                ParseError::QuestionAfterConclusion
            }
            EngineOutput::Malformed { error, .. } => error,
            accepted => {
                attempts.push(Attempt::Accepted { fenced });
                return Ok(TurnReport { output: accepted, attempts });
            }
        };
        attempts.push(Attempt::Rejected { raw: raw.clone(), error: error.clone() });
        bundle.conversation.push(Message::new(PromptRole::Examiner, raw.clone()));
        bundle.conversation.push(Message::new(PromptRole::Instruction, correction(&error)));
        last_failure = Some(Ok((raw, error)));
    }

    Err(match last_failure.expect("at least one attempt") {
        Err(last) => EngineError::ProviderUnavailable { last, attempts },
        Ok((raw, error)) => EngineError::ProtocolExhausted { raw, error, attempts },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_bounds() {
        let text = "a".repeat(MIN_ASSESSMENT_CHARS);
        assert!(FinalAssessment::new(text.clone(), 0).is_ok());
        assert!(FinalAssessment::new(text.clone(), 100).is_ok());
        assert_eq!(FinalAssessment::new(text.clone(), 101), Err(VerdictError::ScoreOutOfRange(101)));
        assert_eq!(FinalAssessment::from_parts(text, -1), Err(VerdictError::ScoreOutOfRange(-1)));
        assert_eq!(
            FinalAssessment::new("a".repeat(199), 50),
            Err(VerdictError::AssessmentTooShort(199))
        );
    }

    #[test]
    fn verdict_json_has_two_keys_in_order() {
        let v = FinalAssessment::new("b".repeat(200), 42).unwrap();
        let json = v.to_json();
        assert!(json.starts_with("{\"assessment\":"));
        assert!(json.ends_with(",\"confidence_score\":42}"));
        assert_eq!(classify_output(&json), EngineOutput::Verdict(v));
    }

    #[test]
    fn deserialize_validates() {
        let bad = format!("{{\"assessment\":\"{}\",\"confidence_score\":150}}", "c".repeat(200));
        assert!(serde_json::from_str::<FinalAssessment>(&bad).is_err());
    }
}
