//! Append-only, hash-chained session transcripts.
//!
//! Each entry's hash covers the previous entry's hash, so any insertion,
//! deletion or mutation is detectable by [`verify_chain_parts`]. The header
//! is bound into the chain through the first `System` entry.

mod entry;
mod export;
mod replay;
mod store;
mod verify;

pub use entry::{compute_entry_hash, Role, SystemNotice, TranscriptEntry, HASH_ALGORITHM, ZERO_HASH};
pub use export::{
    export, verdict_of, ExportError, ExportFormat, ImportError, SubmissionRecord, TranscriptDocument,
    TranscriptHeader, EXPORT_FORMAT,
};
pub use replay::{event_of, replay, replay_document, ReplayError};
pub use store::{entries_path, LogStatus, SessionLog, StoreError, StoredHeader, Subscription, TranscriptStore};
pub use verify::{verify_chain_parts, verify_document, ChainBreak, ChainReport, ChainStatus};
