//! Examination configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound on the question budget of any single session.
pub const MAX_QUESTION_BUDGET: u32 = 20;

pub const DEFAULT_MIN_QUESTIONS: u32 = 4;
pub const DEFAULT_MAX_QUESTIONS: u32 = 5;
pub const DEFAULT_ANSWER_TIMEOUT_SECS: u64 = 600;
pub const DEFAULT_MAX_PROVIDER_RETRIES: u32 = 2;
pub const DEFAULT_PROVIDER_ID: &str = "mock";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("question budget must satisfy 1 <= min ({min}) <= max ({max}) <= {MAX_QUESTION_BUDGET}")]
    QuestionBudget { min: u32, max: u32 },
    #[error("answer timeout must be positive")]
    ZeroTimeout,
    #[error("provider id must not be empty")]
    EmptyProvider,
}

/// Per-session examination settings, fixed when the session is created.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExamConfig {
    pub min_questions: u32,
    pub max_questions: u32,
    /// Course, level and year of the work, used to calibrate question difficulty.
    pub academic_context: String,
    pub answer_timeout_secs: u64,
    pub provider_id: String,
    pub max_provider_retries: u32,
}

impl Default for ExamConfig {
    fn default() -> Self {
        Self {
            min_questions: DEFAULT_MIN_QUESTIONS,
            max_questions: DEFAULT_MAX_QUESTIONS,
            academic_context: String::new(),
            answer_timeout_secs: DEFAULT_ANSWER_TIMEOUT_SECS,
            provider_id: DEFAULT_PROVIDER_ID.to_string(),
            max_provider_retries: DEFAULT_MAX_PROVIDER_RETRIES,
        }
    }
}

impl ExamConfig {
    pub fn with_budget(mut self, min: u32, max: u32) -> Self {
        self.min_questions = min;
        self.max_questions = max;
        self
    }

    pub fn with_context(mut self, context: impl Into<String>) -> Self {
        self.academic_context = context.into();
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let (min, max) = (self.min_questions, self.max_questions);
        if min < 1 || min > max || max > MAX_QUESTION_BUDGET {
            return Err(ConfigError::QuestionBudget { min, max });
        }
        if self.answer_timeout_secs == 0 {
            return Err(ConfigError::ZeroTimeout);
        }
        if self.provider_id.trim().is_empty() {
            return Err(ConfigError::EmptyProvider);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_four_to_five_question_protocol() {
        let config = ExamConfig::default();
        assert_eq!((config.min_questions, config.max_questions), (4, 5));
        assert_eq!(config.answer_timeout_secs, 600);
        assert!(config.validate().is_ok());
    }

    #[test]
    fn budget_bounds() {
        assert!(ExamConfig::default().with_budget(1, 1).validate().is_ok());
        assert!(ExamConfig::default().with_budget(20, 20).validate().is_ok());
        for (min, max) in [(5, 4), (0, 3), (1, 21), (0, 0)] {
            assert_eq!(
                ExamConfig::default().with_budget(min, max).validate(),
                Err(ConfigError::QuestionBudget { min, max })
            );
        }
    }

    #[test]
    fn zero_timeout_rejected() {
        let config = ExamConfig { answer_timeout_secs: 0, ..Default::default() };
        assert_eq!(config.validate(), Err(ConfigError::ZeroTimeout));
    }

    #[test]
    fn partial_json_fills_defaults() {
        let config: ExamConfig =
            serde_json::from_str(r#"{"academic_context":"first-year undergraduate"}"#).unwrap();
        assert_eq!(config.max_questions, 5);
        assert_eq!(config.academic_context, "first-year undergraduate");
    }
}
