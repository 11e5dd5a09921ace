use super::entry::{Role, SystemNotice, TranscriptEntry, HASH_ALGORITHM, ZERO_HASH};
use super::export::{verdict_of, TranscriptDocument};
use super::store::StoredHeader;
use crate::guard::sha256_hex;
use crate::session::SessionId;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChainBreak {
    HashMismatch { expected: String, found: String },
    PrevHashMismatch { expected: String, found: String },
    SeqGap { found: u64 },
    ForeignSession { found: SessionId },
    MisplacedVerdict,
    HeaderMismatch { expected: String, found: String },
    SubmissionDigestMismatch { expected: String, found: String },
    MissingHeader,
    UnboundHeader,
    VerdictMismatch,
}

impl fmt::Display for ChainBreak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainBreak::HashMismatch { expected, found } => {
                write!(f, "entry hash mismatch: expected {expected}, found {found}")
            }
            ChainBreak::PrevHashMismatch { expected, found } => {
                write!(f, "previous-hash link mismatch: expected {expected}, found {found}")
            }
            ChainBreak::SeqGap { found } => write!(f, "sequence gap: found seq {found}"),
            ChainBreak::ForeignSession { found } => write!(f, "entry belongs to session {found}"),
            ChainBreak::MisplacedVerdict => write!(f, "verdict is not the single final entry"),
            ChainBreak::HeaderMismatch { expected, found } => {
                write!(f, "header hash mismatch: expected {expected}, found {found}")
            }
            ChainBreak::SubmissionDigestMismatch { expected, found } => {
                write!(f, "submission digest mismatch: expected {expected}, found {found}")
            }
            ChainBreak::MissingHeader => write!(f, "submission entry present but header missing"),
            ChainBreak::UnboundHeader => write!(f, "header present but no submission entry binds it"),
            ChainBreak::VerdictMismatch => write!(f, "exported verdict differs from the verdict entry"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ChainStatus {
    Valid,
    Broken { seq: u64, reason: ChainBreak },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainReport {
    pub session_id: SessionId,
    pub hash_algorithm: String,
    pub entries: u64,
    pub head_hash: Option<String>,
    pub status: ChainStatus,
}

impl ChainReport {
    pub fn is_valid(&self) -> bool {
        self.status == ChainStatus::Valid
    }

    pub fn broken_seq(&self) -> Option<u64> {
        match &self.status {
            ChainStatus::Valid => None,
            ChainStatus::Broken { seq, .. } => Some(*seq),
        }
    }
}

impl fmt::Display for ChainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.status {
            ChainStatus::Valid => write!(f, "session {}: {} entries, chain valid", self.session_id, self.entries),
            ChainStatus::Broken { seq, reason } => {
                write!(f, "session {}: chain broken at seq {seq}: {reason}", self.session_id)
            }
        }
    }
}

fn check_entries(session_id: &SessionId, entries: &[TranscriptEntry]) -> Result<(), (u64, ChainBreak)> {
    let mut prev = ZERO_HASH;
    for (i, entry) in entries.iter().enumerate() {
        let seq = i as u64;
        if entry.seq != seq {
            return Err((seq, ChainBreak::SeqGap { found: entry.seq }));
        }
        if &entry.session_id != session_id {
            return Err((seq, ChainBreak::ForeignSession { found: entry.session_id.clone() }));
        }
        if entry.prev_hash != prev {
            return Err((seq, ChainBreak::PrevHashMismatch { expected: prev.to_string(), found: entry.prev_hash.clone() }));
        }
        let expected = entry.recompute_hash();
        if entry.entry_hash != expected {
            return Err((seq, ChainBreak::HashMismatch { expected, found: entry.entry_hash.clone() }));
        }
        prev = &entry.entry_hash;
    }
    let verdicts: Vec<u64> = entries.iter().filter(|e| e.role == Role::Verdict).map(|e| e.seq).collect();
    if let Some(&first) = verdicts.first() {
        let last_non_note = entries.iter().rev().find(|e| e.role != Role::Note).map(|e| e.seq);
        if verdicts.len() > 1 || last_non_note != Some(first) {
            return Err((verdicts.get(1).copied().unwrap_or(first), ChainBreak::MisplacedVerdict));
        }
    }
    Ok(())
}

fn check_header(
    session_id: &SessionId,
    stored: Option<&StoredHeader>,
    entries: &[TranscriptEntry],
) -> Result<(), (u64, ChainBreak)> {
    let binding = entries.iter().find_map(|e| match (e.role, SystemNotice::parse(&e.content)) {
        (Role::System, Some(SystemNotice::SubmissionAccepted { digest, header_hash })) => {
            Some((e.seq, digest, header_hash))
        }
        _ => None,
    });
    let Some(stored) = stored else {
        return match binding {
            Some((seq, ..)) => Err((seq, ChainBreak::MissingHeader)),
            None => Ok(()),
        };
    };
    let header = &stored.header;
    let Some((seq, digest, header_hash)) = binding else {
        return Err((entries.len() as u64, ChainBreak::UnboundHeader));
    };
    let expected = header.hash();
    if header_hash != expected || &header.session_id != session_id {
        return Err((seq, ChainBreak::HeaderMismatch { expected, found: header_hash }));
    }
    let raw_digest = sha256_hex(stored.submission.raw.as_bytes());
    for found in [&digest, &header.submission_digest, &stored.submission.sanitized.original_digest] {
        if *found != raw_digest {
            return Err((seq, ChainBreak::SubmissionDigestMismatch { expected: raw_digest, found: found.clone() }));
        }
    }
    Ok(())
}

/// Verifies hash links, seq contiguity, verdict placement and header binding.
pub fn verify_chain_parts(
    session_id: &SessionId,
    stored: Option<&StoredHeader>,
    entries: &[TranscriptEntry],
) -> ChainReport {
    let status = match check_entries(session_id, entries).and_then(|_| check_header(session_id, stored, entries)) {
        Ok(()) => ChainStatus::Valid,
        Err((seq, reason)) => ChainStatus::Broken { seq, reason },
    };
    ChainReport {
        session_id: session_id.clone(),
        hash_algorithm: HASH_ALGORITHM.to_string(),
        entries: entries.len() as u64,
        head_hash: entries.last().map(|e| e.entry_hash.clone()),
        status,
    }
}

/// Verifies an exported document, including its verdict summary.
pub fn verify_document(doc: &TranscriptDocument) -> ChainReport {
    let stored = doc.stored_header();
    let mut report = verify_chain_parts(&doc.session_id, stored.as_ref(), &doc.entries);
    if report.is_valid() && doc.entries.iter().rev().find_map(verdict_of) != doc.verdict {
        report.status = ChainStatus::Broken { seq: doc.entries.len() as u64, reason: ChainBreak::VerdictMismatch };
    }
    report
}
