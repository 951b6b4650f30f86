//! File-backed session store.
//!
//! Layout under the root directory:
//! `sessions/<id>.json` (one record per session) and `logs/<id>.jsonl`
//! (the run's event log). Writes go through a temporary file and a rename so
//! a reader never sees a half-written record.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::session::TestSession;
use crate::eventlog::EventLog;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("session {0} not found")]
    NotFound(String),
    #[error("corrupt record {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("invalid session id {0:?}")]
    BadId(String),
    #[error("store i/o on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone)]
pub struct FileStore {
    root: PathBuf,
}

impl FileStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for dir in [root.join("sessions"), root.join("logs")] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn check_id(id: &str) -> Result<(), StoreError> {
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(StoreError::BadId(id.to_string()));
        }
        Ok(())
    }

    fn session_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.json"))
    }

    pub fn log_name(id: &str) -> String {
        format!("logs/{id}.jsonl")
    }

    fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    }

    pub fn save_session(&self, session: &TestSession) -> Result<(), StoreError> {
        Self::check_id(&session.id)?;
        let json = serde_json::to_vec_pretty(session).expect("session serialises");
        Self::write_atomic(&self.session_path(&session.id), &json)
    }

    pub fn load_session(&self, id: &str) -> Result<TestSession, StoreError> {
        Self::check_id(id)?;
        let path = self.session_path(id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::NotFound(id.to_string())),
            Err(e) => return Err(StoreError::Io { path, source: e }),
        };
        let session: TestSession = serde_json::from_slice(&bytes)
            .map_err(|e| StoreError::Corrupt { path: path.clone(), message: e.to_string() })?;
        if session.id != id {
            return Err(StoreError::Corrupt { path, message: format!("record holds id {}", session.id) });
        }
        Ok(session)
    }

    /// Writes the event log and returns its store-relative name.
    pub fn save_log(&self, id: &str, log: &EventLog) -> Result<String, StoreError> {
        Self::check_id(id)?;
        let name = Self::log_name(id);
        Self::write_atomic(&self.root.join(&name), log.to_jsonl().as_bytes())?;
        Ok(name)
    }

    pub fn load_log(&self, name: &str) -> Result<EventLog, StoreError> {
        let path = self.root.join(name);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        EventLog::from_jsonl(&text).map_err(|e| StoreError::Corrupt { path, message: e.to_string() })
    }

    /// Ids of every stored session, sorted.
    pub fn session_ids(&self) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join("sessions");
        let mut ids: Vec<String> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".json").map(str::to_string)
            })
            .collect();
        ids.sort();
        Ok(ids)
    }
}
