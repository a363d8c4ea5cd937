//! Stage configuration, persisted progress and the gating engine.

mod config;
mod engine;
mod state;
mod telemetry;

pub use config::{
    load_config, load_config_with, AllowedCommand, ConfigError, FlatStage, VerifyStage, WorkflowConfig,
    UNASSIGNED_PHASE,
};
pub use engine::{status_of, Engine, EngineError, StageStatus, StageView, Status, Transition};
pub use state::{lock_path, persist, restore, FileStore, MemoryStore, StageTelemetry, StateError, StateStore, WorkflowState};
pub use telemetry::{telemetry_report, PhaseRow, StageRow, TelemetryReport, Totals};
