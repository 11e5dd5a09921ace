use std::path::PathBuf;
use thiserror::Error;
use viva_core::clock::parse_timestamp;
use viva_core::guard::IngestError;
use viva_core::session::InvalidSessionId;
use viva_core::transcript::ImportError;
use viva_core::ExamError;

/// Process exit codes shared by every subcommand.
pub mod exit {
    pub const OK: i32 = 0;
    /// Tampered transcript, aborted exam or failed simulation.
    pub const FAILED: i32 = 1;
    /// Unreadable, unparseable or rejected input.
    pub const INPUT: i32 = 2;
    pub const FLAGGED: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Ingest(#[from] IngestError),
    #[error("{0}")]
    Import(#[from] ImportError),
    #[error("{0}")]
    SessionId(#[from] InvalidSessionId),
    #[error("invalid timestamp {0:?}: expected the canonical form, e.g. 2025-01-01T09:00:00.000000Z")]
    Timestamp(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Exam(#[from] ExamError),
    #[error("terminal i/o failed: {0}")]
    Terminal(std::io::Error),
    #[error("{0}")]
    Server(#[from] viva_server::ServerError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Exam(ExamError::Ingest(_) | ExamError::Config(_) | ExamError::UnknownProvider(_)) => exit::INPUT,
            CliError::Exam(_) | CliError::Terminal(_) | CliError::Server(_) | CliError::Write { .. } => exit::FAILED,
            _ => exit::INPUT,
        }
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })
}

pub(crate) fn timestamp(value: &str) -> Result<viva_core::Timestamp, CliError> {
    parse_timestamp(value).ok_or_else(|| CliError::Timestamp(value.to_string()))
}
