//! Submission guard: plain-text ingestion, normalization and injection scanning.
//!
//! Flags are advisory. A flagged submission still proceeds to examination;
//! flags are surfaced to invigilators and assessors only.

mod normalize;
mod rules;

pub use normalize::{is_invisible, normalize_text, strip_controls};
pub use rules::{Rule, RuleSet, RulesError, BUILTIN_RULES_TOML};

use crate::clock::Timestamp;
use chrono::Utc;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Default cap on submission size.
pub const DEFAULT_MAX_SUBMISSION_BYTES: usize = 2 * 1024 * 1024;

pub const PLAIN_TEXT: &str = "text/plain";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("unsupported format {0:?}: only text/plain submissions are accepted")]
    UnsupportedFormat(String),
    #[error("submission is not valid UTF-8 (first invalid byte at offset {0})")]
    InvalidEncoding(usize),
    #[error("submission of {size} bytes exceeds the {limit} byte limit")]
    OversizeSubmission { size: usize, limit: usize },
    #[error("submission is empty")]
    EmptySubmission,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low,
    Medium,
    High,
}

/// Half-open byte range into normalized submission text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionFlag {
    pub rule_id: String,
    pub severity: Severity,
    pub span: Span,
    pub excerpt: String,
    pub description: String,
}

impl InjectionFlag {
    /// True when the span lies on char boundaries of `text` and selects `excerpt`.
    pub fn anchors_in(&self, text: &str) -> bool {
        text.get(self.span.start..self.span.end) == Some(self.excerpt.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSubmission {
    bytes: Vec<u8>,
    declared_format: String,
    received_at: Timestamp,
}

impl RawSubmission {
    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// The submission as text; ingestion guarantees valid UTF-8.
    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.bytes).expect("ingest validated UTF-8")
    }

    pub fn declared_format(&self) -> &str {
        &self.declared_format
    }

    pub fn received_at(&self) -> Timestamp {
        self.received_at
    }

    pub fn digest(&self) -> String {
        sha256_hex(&self.bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SanitizedSubmission {
    pub text: String,
    pub flags: Vec<InjectionFlag>,
    /// Lowercase hex SHA-256 of the raw bytes as received.
    pub original_digest: String,
    pub word_count: usize,
}

impl SanitizedSubmission {
    pub fn flag_count(&self) -> usize {
        self.flags.len()
    }

    pub fn high_severity_count(&self) -> usize {
        self.flags.iter().filter(|f| f.severity == Severity::High).count()
    }

    pub fn has_rule(&self, rule_id: &str) -> bool {
        self.flags.iter().any(|f| f.rule_id == rule_id)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn is_plain_text(declared: &str) -> bool {
    let mut parts = declared.split(';').map(str::trim);
    let media = parts.next().unwrap_or_default();
    if !media.eq_ignore_ascii_case(PLAIN_TEXT) {
        return false;
    }
    parts.all(|param| match param.split_once('=') {
        Some((key, value)) if key.trim().eq_ignore_ascii_case("charset") => {
            let value = value.trim().trim_matches('"');
            value.eq_ignore_ascii_case("utf-8") || value.eq_ignore_ascii_case("utf8")
        }
        Some(_) => true,
        None => param.is_empty(),
    })
}

/// Accepts plain UTF-8 text up to the default size cap.
pub fn ingest(bytes: &[u8], declared_format: &str) -> Result<RawSubmission, IngestError> {
    ingest_with_limit(bytes, declared_format, DEFAULT_MAX_SUBMISSION_BYTES)
}

pub fn ingest_with_limit(
    bytes: &[u8],
    declared_format: &str,
    limit: usize,
) -> Result<RawSubmission, IngestError> {
    if !is_plain_text(declared_format) {
        return Err(IngestError::UnsupportedFormat(declared_format.to_string()));
    }
    if bytes.is_empty() {
        return Err(IngestError::EmptySubmission);
    }
    if bytes.len() > limit {
        return Err(IngestError::OversizeSubmission { size: bytes.len(), limit });
    }
    if let Err(err) = std::str::from_utf8(bytes) {
        return Err(IngestError::InvalidEncoding(err.valid_up_to()));
    }
    if std::str::from_utf8(bytes).is_ok_and(|text| text.trim().is_empty()) {
        return Err(IngestError::EmptySubmission);
    }
    Ok(RawSubmission {
        bytes: bytes.to_vec(),
        declared_format: declared_format.to_string(),
        received_at: Utc::now(),
    })
}

/// Normalizes raw text, recording every stripped invisible or control codepoint.
pub fn normalize(raw: &RawSubmission) -> (String, Vec<InjectionFlag>) {
    normalize_text(raw.as_str())
}

/// Runs the built-in rule set over normalized text.
pub fn scan_injection(text: &str) -> Vec<InjectionFlag> {
    RuleSet::builtin().scan(text)
}

/// Normalizes then scans with the built-in rules.
pub fn sanitize(raw: &RawSubmission) -> SanitizedSubmission {
    sanitize_with(raw, RuleSet::builtin())
}

pub fn sanitize_with(raw: &RawSubmission, rules: &RuleSet) -> SanitizedSubmission {
    let original_digest = raw.digest();
    let (text, mut flags) = normalize(raw);
    flags.extend(rules.scan(&text));
    sort_flags(&mut flags);
    let word_count = text.split_whitespace().count();
    SanitizedSubmission { text, flags, original_digest, word_count }
}

fn sort_flags(flags: &mut [InjectionFlag]) {
    flags.sort_by(|a, b| {
        (a.span.start, a.span.end, &a.rule_id).cmp(&(b.span.start, b.span.end, &b.rule_id))
    });
}
