//! Opening an engine or session over a workspace directory.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::checker::Approver;
use crate::gateway::{Session, STATE_DIR};
use crate::workflow::{load_config, restore, ConfigError, Engine, EngineError, FileStore, StateError, StateStore, WorkflowConfig, WorkflowState};

pub const CONFIG_FILE: &str = "stagegate.yaml";
pub const STATE_FILE: &str = "state.json";

pub fn state_path(workspace: &Path) -> PathBuf {
    workspace.join(STATE_DIR).join(STATE_FILE)
}

#[derive(Debug, Error)]
pub enum OpenError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("no workflow state at {0}; start a run first")]
    NoState(String),
    #[error("workspace {path}: {source}")]
    Workspace {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<EngineError> for OpenError {
    fn from(err: EngineError) -> Self {
        match err {
            EngineError::State(e) => OpenError::State(e),
            other => OpenError::State(StateError::Corrupt {
                path: String::new(),
                reason: other.to_string(),
            }),
        }
    }
}

#[derive(Default)]
pub struct OpenOptions {
    pub config: Option<PathBuf>,
    /// Extra stage names to skip on top of the config's skip list.
    pub skip: Vec<String>,
    /// Fail with [`OpenError::NoState`] instead of starting fresh.
    pub require_state: bool,
    pub interactive: bool,
    pub approver: Option<Box<dyn Approver>>,
}

impl OpenOptions {
    pub fn config_path(&self, workspace: &Path) -> PathBuf {
        self.config.clone().unwrap_or_else(|| workspace.join(CONFIG_FILE))
    }
}

pub fn load_workspace_config(workspace: &Path, opts: &OpenOptions) -> Result<WorkflowConfig, OpenError> {
    let mut config = load_config(&opts.config_path(workspace))?;
    config.apply_skip_overlay(opts.skip.iter().map(String::as_str))?;
    Ok(config)
}

/// Loads the config, takes the state lock and restores (or creates) the
/// persisted state.
pub fn open_engine(workspace: &Path, opts: OpenOptions) -> Result<Engine, OpenError> {
    if !workspace.is_dir() {
        return Err(OpenError::Workspace {
            path: workspace.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        });
    }
    let config = load_workspace_config(workspace, &opts)?;
    let path = state_path(workspace);
    let mut store = FileStore::open(&path)?;
    let state = if path.exists() {
        restore(&path, &config)?
    } else if opts.require_state {
        return Err(OpenError::NoState(path.display().to_string()));
    } else {
        let fresh = WorkflowState::fresh(&config);
        store.save(&fresh)?;
        fresh
    };
    let engine = Engine::new(config, state, workspace, Box::new(store))?
        .with_interaction(opts.interactive, opts.approver);
    Ok(engine)
}

pub fn open_session(workspace: &Path, opts: OpenOptions) -> Result<Session, OpenError> {
    let config_path = opts.config_path(workspace);
    let engine = open_engine(workspace, opts)?;
    let mut session = Session::new(engine).map_err(|source| OpenError::Workspace {
        path: workspace.display().to_string(),
        source,
    })?;
    session.protect(&config_path);
    Ok(session)
}
