use crate::clock::{canonical, format_timestamp, Timestamp};
use crate::session::SessionId;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;

pub const HASH_ALGORITHM: &str = "sha256";

/// Hash linking the first entry of every chain.
pub const ZERO_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    System,
    Examiner,
    Candidate,
    Verdict,
    Note,
}

impl Role {
    pub fn label(self) -> &'static str {
        match self {
            Role::System => "System",
            Role::Examiner => "Examiner",
            Role::Candidate => "Candidate",
            Role::Verdict => "Verdict",
            Role::Note => "Note",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptEntry {
    pub session_id: SessionId,
    pub seq: u64,
    #[serde(with = "canonical")]
    pub timestamp: Timestamp,
    pub role: Role,
    pub content: String,
    pub prev_hash: String,
    pub entry_hash: String,
}

/// SHA-256 over length-prefixed fields, lowercase hex.
pub fn compute_entry_hash(
    session_id: &SessionId,
    seq: u64,
    timestamp: &Timestamp,
    role: Role,
    content: &str,
    prev_hash: &str,
) -> String {
    let mut hasher = Sha256::new();
    let seq = seq.to_string();
    let timestamp = format_timestamp(timestamp);
    for field in [session_id.as_str(), &seq, &timestamp, role.label(), content, prev_hash] {
        hasher.update((field.len() as u64).to_be_bytes());
        hasher.update(field.as_bytes());
    }
    hex::encode(hasher.finalize())
}

impl TranscriptEntry {
    pub fn new(
        session_id: SessionId,
        seq: u64,
        timestamp: Timestamp,
        role: Role,
        content: String,
        prev_hash: String,
    ) -> Self {
        let entry_hash = compute_entry_hash(&session_id, seq, &timestamp, role, &content, &prev_hash);
        Self { session_id, seq, timestamp, role, content, prev_hash, entry_hash }
    }

    pub fn recompute_hash(&self) -> String {
        compute_entry_hash(&self.session_id, self.seq, &self.timestamp, self.role, &self.content, &self.prev_hash)
    }
}

/// Structured content of engine-written `System` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SystemNotice {
    SubmissionAccepted { digest: String, header_hash: String },
    Conclude(String),
    Timeout { after_secs: u64 },
    Aborted(String),
}

impl SystemNotice {
    const SUBMISSION: &'static str = "submission accepted: ";
    const CONCLUDE: &'static str = "conclude: ";
    const TIMEOUT: &'static str = "timeout: no answer within ";
    const ABORTED: &'static str = "aborted: ";

    pub fn render(&self) -> String {
        match self {
            SystemNotice::SubmissionAccepted { digest, header_hash } => {
                format!("{}sha256={digest} header={header_hash}", Self::SUBMISSION)
            }
            SystemNotice::Conclude(instruction) => format!("{}{instruction}", Self::CONCLUDE),
            SystemNotice::Timeout { after_secs } => format!("{}{after_secs} s", Self::TIMEOUT),
            SystemNotice::Aborted(reason) => format!("{}{reason}", Self::ABORTED),
        }
    }

    pub fn parse(content: &str) -> Option<Self> {
        if let Some(rest) = content.strip_prefix(Self::SUBMISSION) {
            let (digest, header) = rest.split_once(' ')?;
            return Some(SystemNotice::SubmissionAccepted {
                digest: digest.strip_prefix("sha256=")?.to_string(),
                header_hash: header.strip_prefix("header=")?.to_string(),
            });
        }
        if let Some(rest) = content.strip_prefix(Self::CONCLUDE) {
            return Some(SystemNotice::Conclude(rest.to_string()));
        }
        if let Some(rest) = content.strip_prefix(Self::TIMEOUT) {
            return Some(SystemNotice::Timeout { after_secs: rest.strip_suffix(" s")?.parse().ok()? });
        }
        content.strip_prefix(Self::ABORTED).map(|r| SystemNotice::Aborted(r.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::parse_timestamp;

    #[test]
    fn hash_covers_every_field() {
        let id = SessionId::new("s").unwrap();
        let ts = parse_timestamp("2025-01-01T00:00:00.000000Z").unwrap();
        let base = compute_entry_hash(&id, 0, &ts, Role::Examiner, "q", ZERO_HASH);
        assert_eq!(base.len(), 64);
        assert_ne!(base, compute_entry_hash(&SessionId::new("t").unwrap(), 0, &ts, Role::Examiner, "q", ZERO_HASH));
        assert_ne!(base, compute_entry_hash(&id, 1, &ts, Role::Examiner, "q", ZERO_HASH));
        assert_ne!(base, compute_entry_hash(&id, 0, &(ts + chrono::TimeDelta::microseconds(1)), Role::Examiner, "q", ZERO_HASH));
        assert_ne!(base, compute_entry_hash(&id, 0, &ts, Role::Candidate, "q", ZERO_HASH));
        assert_ne!(base, compute_entry_hash(&id, 0, &ts, Role::Examiner, "q ", ZERO_HASH));
        assert_ne!(base, compute_entry_hash(&id, 0, &ts, Role::Examiner, "q", &"1".repeat(64)));
    }

    #[test]
    fn length_prefix_prevents_field_shifting() {
        let ts = parse_timestamp("2025-01-01T00:00:00.000000Z").unwrap();
        let a = compute_entry_hash(&SessionId::new("ab").unwrap(), 1, &ts, Role::Note, "c", ZERO_HASH);
        let b = compute_entry_hash(&SessionId::new("a").unwrap(), 1, &ts, Role::Note, "bc", ZERO_HASH);
        assert_ne!(a, b);
    }

    #[test]
    fn notices_round_trip() {
        for notice in [
            SystemNotice::SubmissionAccepted { digest: "ab".into(), header_hash: "cd".into() },
            SystemNotice::Conclude("answer now".into()),
            SystemNotice::Timeout { after_secs: 600 },
            SystemNotice::Aborted("invigilator: fire alarm".into()),
        ] {
            assert_eq!(SystemNotice::parse(&notice.render()), Some(notice));
        }
        assert_eq!(SystemNotice::parse("hello"), None);
    }
}
