use super::entry::{Role, TranscriptEntry, ZERO_HASH};
use super::export::{SubmissionRecord, TranscriptHeader};
use super::verify::{verify_chain_parts, ChainReport};
use crate::clock::Timestamp;
use crate::guard::strip_controls;
use crate::session::SessionId;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use thiserror::Error;
use tokio::sync::watch;

const HEADER_FILE: &str = "header.json";
const ENTRIES_FILE: &str = "entries.jsonl";
const SEALED_FILE: &str = "sealed";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("session {0} already exists")]
    SessionExists(SessionId),
    #[error("session {0} is sealed")]
    SessionSealed(SessionId),
    #[error("session {0} already has a transcript header")]
    HeaderExists(SessionId),
    #[error("storage failure: {0}")]
    StorageFailure(String),
}

impl From<std::io::Error> for StoreError {
    fn from(err: std::io::Error) -> Self {
        StoreError::StorageFailure(err.to_string())
    }
}

impl From<serde_json::Error> for StoreError {
    fn from(err: serde_json::Error) -> Self {
        StoreError::StorageFailure(err.to_string())
    }
}

/// Header plus the submission blob stored beside it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredHeader {
    pub header: TranscriptHeader,
    pub submission: SubmissionRecord,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LogStatus {
    pub len: u64,
    pub sealed: bool,
}

#[derive(Default)]
struct LogInner {
    header: Option<Arc<StoredHeader>>,
    entries: Vec<TranscriptEntry>,
    sealed: bool,
}

/// The append-only transcript of one session.
pub struct SessionLog {
    session_id: SessionId,
    dir: Option<PathBuf>,
    inner: RwLock<LogInner>,
    file: Mutex<Option<File>>,
    status: watch::Sender<LogStatus>,
}

impl SessionLog {
    fn new(session_id: SessionId, dir: Option<PathBuf>, inner: LogInner) -> Self {
        let status = LogStatus { len: inner.entries.len() as u64, sealed: inner.sealed };
        Self {
            session_id,
            dir,
            inner: RwLock::new(inner),
            file: Mutex::new(None),
            status: watch::Sender::new(status),
        }
    }

    pub fn session_id(&self) -> &SessionId {
        &self.session_id
    }

    pub fn header(&self) -> Option<Arc<StoredHeader>> {
        self.inner.read().unwrap().header.clone()
    }

    pub fn is_sealed(&self) -> bool {
        self.inner.read().unwrap().sealed
    }

    pub fn len(&self) -> u64 {
        self.inner.read().unwrap().entries.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sequence number the next append will receive.
    pub fn next_seq(&self) -> u64 {
        self.len()
    }

    pub fn get(&self, seq: u64) -> Option<TranscriptEntry> {
        self.inner.read().unwrap().entries.get(seq as usize).cloned()
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.inner.read().unwrap().entries.clone()
    }

    pub fn entries_since(&self, seq: u64) -> Vec<TranscriptEntry> {
        let inner = self.inner.read().unwrap();
        inner.entries.get(seq as usize..).map(<[_]>::to_vec).unwrap_or_default()
    }

    pub(crate) fn write_header(&self, stored: StoredHeader) -> Result<(), StoreError> {
        let mut inner = self.inner.write().unwrap();
        if inner.header.is_some() {
            return Err(StoreError::HeaderExists(self.session_id.clone()));
        }
        if inner.sealed {
            return Err(StoreError::SessionSealed(self.session_id.clone()));
        }
        if let Some(dir) = &self.dir {
            let tmp = dir.join(format!("{HEADER_FILE}.tmp"));
            fs::write(&tmp, serde_json::to_vec_pretty(&stored)?)?;
            fs::rename(&tmp, dir.join(HEADER_FILE))?;
        }
        inner.header = Some(Arc::new(stored));
        Ok(())
    }

    pub(crate) fn append(&self, role: Role, content: &str, at: Timestamp) -> Result<TranscriptEntry, StoreError> {
        let mut inner = self.inner.write().unwrap();
        if inner.sealed {
            return Err(StoreError::SessionSealed(self.session_id.clone()));
        }
        let seq = inner.entries.len() as u64;
        let prev_hash = inner.entries.last().map_or_else(|| ZERO_HASH.to_string(), |e| e.entry_hash.clone());
        let entry = TranscriptEntry::new(self.session_id.clone(), seq, at, role, strip_controls(content), prev_hash);

        if let Some(dir) = &self.dir {
            let mut file = self.file.lock().unwrap();
            if file.is_none() {
                *file = Some(OpenOptions::new().create(true).append(true).open(dir.join(ENTRIES_FILE))?);
            }
            let mut line = serde_json::to_vec(&entry)?;
            line.push(b'\n');
            let f = file.as_mut().expect("opened above");
            f.write_all(&line)?;
            f.flush()?;
        }

        inner.entries.push(entry.clone());
        let sealing = role == Role::Verdict;
        if sealing {
            self.mark_sealed(&mut inner)?;
        }
        self.status.send_replace(LogStatus { len: inner.entries.len() as u64, sealed: inner.sealed });
        Ok(entry)
    }

    fn mark_sealed(&self, inner: &mut LogInner) -> Result<(), StoreError> {
        if let Some(dir) = &self.dir {
            if let Some(f) = self.file.lock().unwrap().as_mut() {
                f.sync_all()?;
            }
            fs::write(dir.join(SEALED_FILE), b"")?;
        }
        inner.sealed = true;
        Ok(())
    }

    pub(crate) fn seal(&self) -> Result<(), StoreError> {
        let mut inner = self.inner.write().unwrap();
        if !inner.sealed {
            self.mark_sealed(&mut inner)?;
            self.status.send_replace(LogStatus { len: inner.entries.len() as u64, sealed: true });
        }
        Ok(())
    }

    pub fn verify(&self) -> ChainReport {
        let inner = self.inner.read().unwrap();
        verify_chain_parts(&self.session_id, inner.header.as_deref(), &inner.entries)
    }

    /// Live stream of entries starting at `from_seq`.
    pub fn subscribe(self: &Arc<Self>, from_seq: u64) -> Subscription {
        Subscription { log: Arc::clone(self), next: from_seq, status: self.status.subscribe() }
    }
}

/// Ordered, resumable view of a session's entries.
///
/// Yields each entry exactly once in seq order and ends after the session is
/// sealed and every entry has been delivered.
pub struct Subscription {
    log: Arc<SessionLog>,
    next: u64,
    status: watch::Receiver<LogStatus>,
}

impl Subscription {
    pub fn next_seq(&self) -> u64 {
        self.next
    }

    pub fn log(&self) -> &Arc<SessionLog> {
        &self.log
    }

    pub async fn next(&mut self) -> Option<TranscriptEntry> {
        loop {
            let status = *self.status.borrow_and_update();
            if let Some(entry) = self.try_next() {
                return Some(entry);
            }
            if status.sealed {
                return None;
            }
            self.status.changed().await.ok()?;
        }
    }

    /// Returns the next entry if it has already been appended.
    pub fn try_next(&mut self) -> Option<TranscriptEntry> {
        let entry = self.log.get(self.next)?;
        self.next += 1;
        Some(entry)
    }
}

/// Embedded transcript store: in memory, optionally mirrored to a directory
/// with one subdirectory per session.
pub struct TranscriptStore {
    root: Option<PathBuf>,
    logs: RwLock<HashMap<SessionId, Arc<SessionLog>>>,
}

impl Default for TranscriptStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl TranscriptStore {
    pub fn in_memory() -> Self {
        Self { root: None, logs: RwLock::new(HashMap::new()) }
    }

    /// Opens (creating if needed) a durable store and loads existing logs.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        let mut logs = HashMap::new();
        for dir in fs::read_dir(&root)? {
            let dir = dir?;
            if !dir.file_type()?.is_dir() {
                continue;
            }
            let Ok(id) = SessionId::new(dir.file_name().to_string_lossy().into_owned()) else {
                continue;
            };
            let inner = load_log(&dir.path())?;
            logs.insert(id.clone(), Arc::new(SessionLog::new(id, Some(dir.path()), inner)));
        }
        Ok(Self { root: Some(root), logs: RwLock::new(logs) })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn create(&self, session_id: &SessionId) -> Result<Arc<SessionLog>, StoreError> {
        let mut logs = self.logs.write().unwrap();
        if logs.contains_key(session_id) {
            return Err(StoreError::SessionExists(session_id.clone()));
        }
        let dir = match &self.root {
            Some(root) => {
                let dir = root.join(session_id.as_str());
                fs::create_dir(&dir).map_err(|e| match e.kind() {
                    std::io::ErrorKind::AlreadyExists => StoreError::SessionExists(session_id.clone()),
                    _ => e.into(),
                })?;
                Some(dir)
            }
            None => None,
        };
        let log = Arc::new(SessionLog::new(session_id.clone(), dir, LogInner::default()));
        logs.insert(session_id.clone(), Arc::clone(&log));
        Ok(log)
    }

    pub fn get(&self, session_id: &SessionId) -> Result<Arc<SessionLog>, StoreError> {
        self.logs
            .read()
            .unwrap()
            .get(session_id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownSession(session_id.clone()))
    }

    pub fn contains(&self, session_id: &SessionId) -> bool {
        self.logs.read().unwrap().contains_key(session_id)
    }

    pub fn session_ids(&self) -> Vec<SessionId> {
        let mut ids: Vec<SessionId> = self.logs.read().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn write_header(&self, session_id: &SessionId, stored: StoredHeader) -> Result<(), StoreError> {
        self.get(session_id)?.write_header(stored)
    }

    /// Appends an entry with the next seq. A `Verdict` entry seals the session.
    pub fn append(
        &self,
        session_id: &SessionId,
        role: Role,
        content: &str,
        at: Timestamp,
    ) -> Result<TranscriptEntry, StoreError> {
        self.get(session_id)?.append(role, content, at)
    }

    pub fn seal(&self, session_id: &SessionId) -> Result<(), StoreError> {
        self.get(session_id)?.seal()
    }

    pub fn entries(&self, session_id: &SessionId) -> Result<Vec<TranscriptEntry>, StoreError> {
        Ok(self.get(session_id)?.entries())
    }

    pub fn verify_chain(&self, session_id: &SessionId) -> Result<ChainReport, StoreError> {
        Ok(self.get(session_id)?.verify())
    }

    pub fn subscribe(&self, session_id: &SessionId, from_seq: u64) -> Result<Subscription, StoreError> {
        Ok(self.get(session_id)?.subscribe(from_seq))
    }
}

fn load_log(dir: &Path) -> Result<LogInner, StoreError> {
    let header = match fs::read(dir.join(HEADER_FILE)) {
        Ok(bytes) => Some(Arc::new(serde_json::from_slice::<StoredHeader>(&bytes)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    let mut entries = Vec::new();
    match File::open(dir.join(ENTRIES_FILE)) {
        Ok(file) => {
            for line in BufReader::new(file).lines() {
                let line = line?;
                if !line.is_empty() {
                    entries.push(serde_json::from_str::<TranscriptEntry>(&line)?);
                }
            }
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(e.into()),
    }
    let sealed = dir.join(SEALED_FILE).exists()
        || entries.iter().rev().find(|e| e.role != Role::Note).is_some_and(|e| e.role == Role::Verdict);
    Ok(LogInner { header, entries, sealed })
}

/// Path of the entries file of a durable session log.
pub fn entries_path(root: &Path, session_id: &SessionId) -> PathBuf {
    root.join(session_id.as_str()).join(ENTRIES_FILE)
}
