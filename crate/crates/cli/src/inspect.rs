use crate::error::{read_file, CliError};
use std::path::Path;
use viva_core::guard::{ingest, sanitize_with, InjectionFlag, RuleSet, PLAIN_TEXT};
use viva_core::transcript::{verify_document, ChainReport, TranscriptDocument};

/// Verifies an exported transcript file.
pub fn verify_file(path: &Path) -> Result<(TranscriptDocument, ChainReport), CliError> {
    let bytes = read_file(path)?;
    let source = String::from_utf8(bytes).map_err(|e| viva_core::guard::IngestError::InvalidEncoding(e.utf8_error().valid_up_to()))?;
    let doc = TranscriptDocument::from_json(&source)?;
    let report = verify_document(&doc);
    Ok((doc, report))
}

/// Scans a plain-text file for injection attempts.
pub fn scan_file(path: &Path, rules: &RuleSet) -> Result<Vec<InjectionFlag>, CliError> {
    let raw = ingest(&read_file(path)?, PLAIN_TEXT)?;
    Ok(sanitize_with(&raw, rules).flags)
}
