use super::entry::{Role, TranscriptEntry};
use super::store::{StoreError, StoredHeader, TranscriptStore};
use crate::clock::{canonical, format_timestamp, Timestamp};
use crate::config::ExamConfig;
use crate::engine::{FinalAssessment, ProviderMetadata};
use crate::guard::{sha256_hex, SanitizedSubmission};
use crate::session::SessionId;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

pub const EXPORT_FORMAT: &str = "viva-transcript/1";

/// Audit provenance written once, when the submission is accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptHeader {
    pub session_id: SessionId,
    #[serde(with = "canonical")]
    pub created_at: Timestamp,
    pub config: ExamConfig,
    pub submission_digest: String,
    pub hash_algorithm: String,
    pub rules_version: String,
    pub prompt_version: String,
    pub provider: ProviderMetadata,
}

impl TranscriptHeader {
    /// SHA-256 of the header's canonical JSON.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("header serializes"))
    }
}

/// The raw submission as received plus its sanitized form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmissionRecord {
    pub raw: String,
    pub sanitized: SanitizedSubmission,
}

/// Canonical JSON export of one session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptDocument {
    pub format: String,
    pub session_id: SessionId,
    pub header: Option<TranscriptHeader>,
    pub submission: Option<SubmissionRecord>,
    pub entries: Vec<TranscriptEntry>,
    pub verdict: Option<FinalAssessment>,
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("unsupported export format {0:?}; use json or text")]
    UnsupportedFormat(String),
}

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("transcript is not valid JSON for this format: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported transcript format {0:?}")]
    Format(String),
    #[error("header and submission must both be present or both absent")]
    Incomplete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Text,
}

impl FromStr for ExportFormat {
    type Err = ExportError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ExportFormat::Json),
            "text" | "txt" => Ok(ExportFormat::Text),
            _ => Err(ExportError::UnsupportedFormat(s.to_string())),
        }
    }
}

/// Parses the JSON content of a `Verdict` entry.
pub fn verdict_of(entry: &TranscriptEntry) -> Option<FinalAssessment> {
    (entry.role == Role::Verdict).then(|| serde_json::from_str(&entry.content).ok()).flatten()
}

impl TranscriptDocument {
    pub fn assemble(session_id: SessionId, stored: Option<&StoredHeader>, entries: Vec<TranscriptEntry>) -> Self {
        let verdict = entries.iter().rev().find_map(verdict_of);
        Self {
            format: EXPORT_FORMAT.to_string(),
            session_id,
            header: stored.map(|s| s.header.clone()),
            submission: stored.map(|s| s.submission.clone()),
            entries,
            verdict,
        }
    }

    pub fn from_store(store: &TranscriptStore, session_id: &SessionId) -> Result<Self, StoreError> {
        let log = store.get(session_id)?;
        Ok(Self::assemble(session_id.clone(), log.header().as_deref(), log.entries()))
    }

    pub fn stored_header(&self) -> Option<StoredHeader> {
        Some(StoredHeader { header: self.header.clone()?, submission: self.submission.clone()? })
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("document serializes");
        out.push('\n');
        out
    }

    pub fn from_json(source: &str) -> Result<Self, ImportError> {
        let doc: Self = serde_json::from_str(source)?;
        if doc.format != EXPORT_FORMAT {
            return Err(ImportError::Format(doc.format));
        }
        if doc.header.is_some() != doc.submission.is_some() {
            return Err(ImportError::Incomplete);
        }
        Ok(doc)
    }

    /// Plain-text rendering: `[Role] content` blocks separated by blank
    /// lines, with fenced header and verdict sections.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("=== HEADER ===\n");
        let _ = writeln!(out, "session: {}", self.session_id);
        if let (Some(h), Some(s)) = (&self.header, &self.submission) {
            let c = &h.config;
            let _ = writeln!(out, "created: {}", format_timestamp(&h.created_at));
            let _ = writeln!(
                out,
                "questions: {}-{}\nacademic context: {}\nanswer timeout: {} s\nprovider: {} ({}), retries {}",
                c.min_questions,
                c.max_questions,
                if c.academic_context.is_empty() { "(none)" } else { &c.academic_context },
                c.answer_timeout_secs,
                h.provider.provider_id,
                h.provider.model,
                c.max_provider_retries
            );
            let _ = writeln!(out, "submission sha256: {}", h.submission_digest);
            let _ = writeln!(out, "submission words: {}", s.sanitized.word_count);
            let _ = writeln!(out, "rules version: {}", h.rules_version);
            let _ = writeln!(out, "prompt version: {}", h.prompt_version);
            let _ = writeln!(out, "hash algorithm: {}", h.hash_algorithm);
            let _ = writeln!(out, "flags: {}", s.sanitized.flags.len());
            for f in &s.sanitized.flags {
                let _ = writeln!(
                    out,
                    "  {} {:?} bytes {}..{} {:?}: {}",
                    f.rule_id, f.severity, f.span.start, f.span.end, f.excerpt, f.description
                );
            }
        }
        out.push_str("=== END HEADER ===\n");
        for entry in &self.entries {
            let _ = write!(out, "\n[{}] {}\n", entry.role, entry.content);
        }
        if let Some(v) = &self.verdict {
            let _ = write!(
                out,
                "\n=== VERDICT ===\nconfidence_score: {}\nassessment: {}\n=== END VERDICT ===\n",
                v.confidence_score(),
                v.assessment()
            );
        }
        out
    }

    pub fn render(&self, format: ExportFormat) -> String {
        match format {
            ExportFormat::Json => self.to_json(),
            ExportFormat::Text => self.to_text(),
        }
    }
}

/// Exports a session transcript as canonical JSON or plain text.
pub fn export(store: &TranscriptStore, session_id: &SessionId, format: &str) -> Result<String, ExportError> {
    let format: ExportFormat = format.parse()?;
    Ok(TranscriptDocument::from_store(store, session_id)?.render(format))
}
