use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::WorkflowConfig;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("state file {path} is corrupt: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("workflow config changed since the state was written (state digest {found}, config digest {expected})")]
    DigestMismatch { expected: String, found: String },
    #[error("state file {0} is locked by another session")]
    Locked(String),
    #[error("state I/O on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl StateError {
    fn io(path: &Path, source: io::Error) -> Self {
        StateError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageTelemetry {
    pub name: String,
    /// Check and Complete invocations while the stage was active.
    pub attempts: u64,
    /// Invocations whose aggregate verdict failed.
    pub failures: u64,
    /// Wall-clock seconds between becoming active and passing.
    pub elapsed_s: f64,
    pub passed: bool,
}

/// Persisted workflow progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowState {
    pub config_digest: String,
    /// Index into the flattened stage order; equals the stage count once
    /// the workflow has finished.
    pub current_index: usize,
    pub stages: Vec<StageTelemetry>,
    /// Unix seconds.
    pub created_at: u64,
    pub updated_at: u64,
}

pub(crate) fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl WorkflowState {
    pub fn fresh(config: &WorkflowConfig) -> Self {
        let now = unix_now();
        WorkflowState {
            config_digest: config.digest().to_string(),
            current_index: 0,
            stages: config
                .flat()
                .iter()
                .map(|s| StageTelemetry {
                    name: s.name.clone(),
                    attempts: 0,
                    failures: 0,
                    elapsed_s: 0.0,
                    passed: false,
                })
                .collect(),
            created_at: now,
            updated_at: now,
        }
    }

    pub fn finished(&self) -> bool {
        self.current_index >= self.stages.len()
    }

    /// This state with timestamps and elapsed times zeroed, for comparing
    /// runs that differ only in timing.
    pub fn without_timing(&self) -> Self {
        let mut copy = self.clone();
        copy.created_at = 0;
        copy.updated_at = 0;
        for stage in &mut copy.stages {
            stage.elapsed_s = 0.0;
        }
        copy
    }

    /// Checks the digest and the structural invariants against `config`.
    pub fn validate(&self, config: &WorkflowConfig) -> Result<(), StateError> {
        self.validate_at(config, Path::new("<memory>"))
    }

    fn validate_at(&self, config: &WorkflowConfig, path: &Path) -> Result<(), StateError> {
        if self.config_digest != config.digest() {
            return Err(StateError::DigestMismatch {
                expected: config.digest().to_string(),
                found: self.config_digest.clone(),
            });
        }
        let corrupt = |reason: String| StateError::Corrupt {
            path: path.display().to_string(),
            reason,
        };
        let flat = config.flat();
        if self.stages.len() != flat.len() {
            return Err(corrupt(format!(
                "{} stage records for {} configured stages",
                self.stages.len(),
                flat.len()
            )));
        }
        if self.current_index > flat.len() {
            return Err(corrupt(format!("current_index {} out of range", self.current_index)));
        }
        for (i, (record, stage)) in self.stages.iter().zip(flat).enumerate() {
            if record.name != stage.name {
                return Err(corrupt(format!(
                    "stage record {i} is `{}`, expected `{}`",
                    record.name, stage.name
                )));
            }
            if record.failures > record.attempts {
                return Err(corrupt(format!("stage `{}` has more failures than attempts", record.name)));
            }
            if !(record.elapsed_s.is_finite() && record.elapsed_s >= 0.0) {
                return Err(corrupt(format!("stage `{}` has invalid elapsed_s", record.name)));
            }
            let untouched = record.attempts == 0 && record.elapsed_s == 0.0;
            if i < self.current_index && !record.passed && !(stage.skippable && untouched) {
                return Err(corrupt(format!(
                    "stage `{}` lies before the current stage but never passed",
                    record.name
                )));
            }
            if i >= self.current_index && record.passed {
                return Err(corrupt(format!(
                    "stage `{}` is marked passed but has not been reached",
                    record.name
                )));
            }
        }
        Ok(())
    }
}

/// Writes `state` to `path` via a temporary file in the same directory and
/// an atomic rename.
pub fn persist(state: &WorkflowState, path: &Path) -> Result<(), StateError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| StateError::io(dir, e))?;
    let mut body = serde_json::to_vec_pretty(state).expect("state serializes");
    body.push(b'\n');
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "state".into());
    let tmp = dir.join(format!(".{file_name}.tmp-{}", std::process::id()));
    let write = || -> io::Result<()> {
        let mut file = File::create(&tmp)?;
        file.write_all(&body)?;
        file.sync_all()?;
        fs::rename(&tmp, path)?;
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
        Ok(())
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        StateError::io(path, e)
    })
}

/// Reads a state file and validates it against `config`.
pub fn restore(path: &Path, config: &WorkflowConfig) -> Result<WorkflowState, StateError> {
    let bytes = fs::read(path).map_err(|e| StateError::io(path, e))?;
    let state: WorkflowState = serde_json::from_slice(&bytes).map_err(|e| StateError::Corrupt {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    state.validate_at(config, path)?;
    Ok(state)
}

/// Where an engine writes its state after every change.
pub trait StateStore {
    fn save(&mut self, state: &WorkflowState) -> Result<(), StateError>;
}

/// Atomic file persistence guarded by an exclusive advisory lock on
/// `<state>.lock`, held for the store's lifetime.
#[derive(Debug)]
pub struct FileStore {
    path: PathBuf,
    _lock: File,
}

impl FileStore {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StateError> {
        let path = path.into();
        let lock_path = lock_path(&path);
        if let Some(dir) = lock_path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| StateError::io(dir, e))?;
        }
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(|e| StateError::io(&lock_path, e))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(fs::TryLockError::WouldBlock) => {
                return Err(StateError::Locked(path.display().to_string()))
            }
            Err(fs::TryLockError::Error(e)) => return Err(StateError::io(&lock_path, e)),
        }
        Ok(FileStore { path, _lock: lock })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub fn lock_path(state: &Path) -> PathBuf {
    let mut name = state.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".lock");
    state.with_file_name(name)
}

impl StateStore for FileStore {
    fn save(&mut self, state: &WorkflowState) -> Result<(), StateError> {
        persist(state, &self.path)
    }
}

/// Keeps every saved snapshot in memory.
#[derive(Debug, Default, Clone)]
pub struct MemoryStore {
    pub snapshots: Vec<WorkflowState>,
}

impl StateStore for MemoryStore {
    fn save(&mut self, state: &WorkflowState) -> Result<(), StateError> {
        self.snapshots.push(state.clone());
        Ok(())
    }
}

impl<S: StateStore + ?Sized> StateStore for Box<S> {
    fn save(&mut self, state: &WorkflowState) -> Result<(), StateError> {
        (**self).save(state)
    }
}
