use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{FlatStage, WorkflowConfig};
use super::state::{unix_now, StateError, StateStore, WorkflowState};
use crate::checker::{run_checker, Approver, CheckContext, CheckResult, CheckerError, CheckerRegistry};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("workflow already finished")]
    AlreadyFinished,
    #[error(transparent)]
    Checker(#[from] CheckerError),
    #[error(transparent)]
    State(#[from] StateError),
}

/// What the agent sees for the active stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageView {
    pub index: usize,
    pub total: usize,
    pub name: String,
    pub phase: String,
    pub description: String,
    pub tips: String,
    pub outputs: Vec<String>,
    /// One line per checker still to pass, e.g. `label_syntax spec=docs/spec.md`.
    pub checkers: Vec<String>,
    pub attempts: u64,
    pub failures: u64,
}

impl StageView {
    /// Plain-text rendering used by `GetCurrentTips` and the CLI.
    pub fn render(&self) -> String {
        let mut out = format!(
            "Stage {}/{}: {} [{}]\n",
            self.index + 1,
            self.total,
            self.name,
            self.phase
        );
        if !self.description.is_empty() {
            out.push_str(&format!("\nTask:\n{}\n", self.description.trim_end()));
        }
        if !self.tips.is_empty() {
            out.push_str(&format!("\nTips:\n{}\n", self.tips.trim_end()));
        }
        if !self.outputs.is_empty() {
            out.push_str("\nExpected outputs:\n");
            for o in &self.outputs {
                out.push_str(&format!("  - {o}\n"));
            }
        }
        if !self.checkers.is_empty() {
            out.push_str("\nCheckers:\n");
            for c in &self.checkers {
                out.push_str(&format!("  - {c}\n"));
            }
        }
        out
    }
}

/// Outcome of a `Complete` request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub stage: String,
    pub result: CheckResult,
    pub advanced: bool,
    /// The newly active stage, if any.
    pub next: Option<String>,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStatus {
    pub name: String,
    pub phase: String,
    pub passed: bool,
    pub skipped: bool,
    pub attempts: u64,
    pub failures: u64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub current_index: usize,
    pub total: usize,
    pub current: Option<String>,
    pub finished: bool,
    pub stages: Vec<StageStatus>,
}

fn checker_summary(spec: &crate::checker::CheckerSpec) -> String {
    let mut parts = vec![spec.kind.clone()];
    for (k, v) in &spec.params {
        let v = match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        parts.push(format!("{k}={v}"));
    }
    parts.join(" ")
}

pub fn status_of(state: &WorkflowState, config: &WorkflowConfig) -> Status {
    let stages = config
        .flat()
        .iter()
        .zip(&state.stages)
        .enumerate()
        .map(|(i, (stage, t))| StageStatus {
            name: stage.name.clone(),
            phase: stage.phase.clone(),
            passed: t.passed,
            skipped: config.is_skipped(i),
            attempts: t.attempts,
            failures: t.failures,
            elapsed_s: t.elapsed_s,
        })
        .collect();
    let current = next_active(config, state.current_index);
    Status {
        current_index: state.current_index,
        total: config.len(),
        current: config.flat().get(current).map(|s| s.name.clone()),
        finished: current >= config.len(),
        stages,
    }
}

/// First index at or after `from` that is not skipped.
pub(crate) fn next_active(config: &WorkflowConfig, mut from: usize) -> usize {
    while from < config.len() && config.is_skipped(from) {
        from += 1;
    }
    from
}

/// Drives one workflow: gates progression on checker verdicts and persists
/// state through its store after every change.
pub struct Engine {
    config: WorkflowConfig,
    state: WorkflowState,
    workspace: PathBuf,
    registry: CheckerRegistry,
    store: Box<dyn StateStore>,
    interactive: bool,
    approver: Option<Box<dyn Approver>>,
    active_since: Instant,
}

impl Engine {
    /// Opens an engine over `state`, which must match `config`. A current
    /// index that names a skipped stage is moved forward immediately.
    pub fn new(
        config: WorkflowConfig,
        state: WorkflowState,
        workspace: impl Into<PathBuf>,
        store: Box<dyn StateStore>,
    ) -> Result<Self, EngineError> {
        state.validate(&config)?;
        let mut engine = Engine {
            config,
            state,
            workspace: workspace.into(),
            registry: CheckerRegistry::default(),
            store,
            interactive: false,
            approver: None,
            active_since: Instant::now(),
        };
        let active = next_active(&engine.config, engine.state.current_index);
        if active != engine.state.current_index {
            engine.state.current_index = active;
            engine.save()?;
        }
        Ok(engine)
    }

    pub fn with_registry(mut self, registry: CheckerRegistry) -> Self {
        self.registry = registry;
        self
    }

    pub fn with_interaction(mut self, interactive: bool, approver: Option<Box<dyn Approver>>) -> Self {
        self.interactive = interactive;
        self.approver = approver;
        self
    }

    pub fn config(&self) -> &WorkflowConfig {
        &self.config
    }

    pub fn state(&self) -> &WorkflowState {
        &self.state
    }

    pub fn workspace(&self) -> &Path {
        &self.workspace
    }

    pub fn finished(&self) -> bool {
        self.state.current_index >= self.config.len()
    }

    fn active(&self) -> Result<(usize, &FlatStage), EngineError> {
        let i = self.state.current_index;
        self.config
            .flat()
            .get(i)
            .map(|s| (i, s))
            .ok_or(EngineError::AlreadyFinished)
    }

    pub fn current_stage(&self) -> Option<StageView> {
        let (index, stage) = self.active().ok()?;
        let telemetry = &self.state.stages[index];
        Some(StageView {
            index,
            total: self.config.len(),
            name: stage.name.clone(),
            phase: stage.phase.clone(),
            description: stage.description.clone(),
            tips: stage.tips.clone(),
            outputs: stage.outputs.clone(),
            checkers: stage.checkers.iter().map(checker_summary).collect(),
            attempts: telemetry.attempts,
            failures: telemetry.failures,
        })
    }

    pub fn status(&self) -> Status {
        status_of(&self.state, &self.config)
    }

    /// Runs the checkers of an arbitrary stage without touching telemetry.
    pub fn evaluate_stage(&self, index: usize) -> Result<CheckResult, EngineError> {
        let stage = self.config.flat().get(index).ok_or(EngineError::AlreadyFinished)?;
        self.evaluate(stage)
    }

    fn evaluate(&self, stage: &FlatStage) -> Result<CheckResult, EngineError> {
        let mut ctx = CheckContext::new(&self.workspace, &stage.name);
        ctx.interactive = self.interactive;
        ctx.approver = self.approver.as_deref();
        let mut results = Vec::with_capacity(stage.checkers.len());
        for spec in &stage.checkers {
            results.push(run_checker(&self.registry, spec, &ctx)?);
        }
        Ok(CheckResult::merge(results))
    }

    fn tick(&mut self, index: usize) {
        let now = Instant::now();
        self.state.stages[index].elapsed_s += now.duration_since(self.active_since).as_secs_f64();
        self.active_since = now;
    }

    fn save(&mut self) -> Result<(), EngineError> {
        self.state.updated_at = unix_now();
        self.store.save(&self.state)?;
        Ok(())
    }

    /// Writes the current state through the store.
    pub fn persist(&mut self) -> Result<(), EngineError> {
        self.save()
    }

    fn attempt(&mut self) -> Result<(usize, CheckResult), EngineError> {
        let (index, stage) = self.active()?;
        let result = self.evaluate(stage)?;
        self.tick(index);
        let record = &mut self.state.stages[index];
        record.attempts += 1;
        if !result.passed() {
            record.failures += 1;
        }
        Ok((index, result))
    }

    /// Runs the active stage's checkers and records the attempt. Never
    /// advances.
    pub fn run_check(&mut self) -> Result<CheckResult, EngineError> {
        let (_, result) = self.attempt()?;
        self.save()?;
        Ok(result)
    }

    /// Re-runs the active stage's checkers and advances past it, and past
    /// any skipped stages after it, only if every checker passes.
    pub fn complete_stage(&mut self) -> Result<Transition, EngineError> {
        let (index, result) = self.attempt()?;
        let stage = self.config.flat()[index].name.clone();
        let advanced = result.passed();
        if advanced {
            self.state.stages[index].passed = true;
            self.state.current_index = next_active(&self.config, index + 1);
            self.active_since = Instant::now();
        }
        self.save()?;
        let next = self
            .config
            .flat()
            .get(self.state.current_index)
            .map(|s| s.name.clone());
        Ok(Transition {
            stage,
            result,
            advanced,
            finished: self.finished(),
            next,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::state::MemoryStore;
    use std::fs;

    const THREE: &str = r#"
version: "1"
stages:
  - name: one
    checkers: [{kind: file_exists, paths: [one.txt]}]
  - name: mock
    skippable: true
    checkers: [{kind: file_exists, paths: [never.txt]}]
  - name: two
    checkers: [{kind: file_exists, paths: [two.txt]}]
  - name: three
    checkers: [{kind: file_exists, paths: [three.txt]}]
skip: [mock]
"#;

    fn engine(dir: &Path) -> Engine {
        let cfg = WorkflowConfig::from_yaml(THREE, &CheckerRegistry::default()).unwrap();
        let state = WorkflowState::fresh(&cfg);
        Engine::new(cfg, state, dir, Box::new(MemoryStore::default())).unwrap()
    }

    #[test]
    fn gated_progression_skips_skipped_stages() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = engine(dir.path());
        assert_eq!(e.current_stage().unwrap().name, "one");

        let t = e.complete_stage().unwrap();
        assert!(!t.advanced);
        assert_eq!(e.state().current_index, 0);
        assert_eq!(e.state().stages[0].failures, 1);

        fs::write(dir.path().join("one.txt"), "x").unwrap();
        let r = e.run_check().unwrap();
        assert!(r.passed());
        assert_eq!(e.state().current_index, 0, "check never advances");

        let t = e.complete_stage().unwrap();
        assert!(t.advanced);
        assert_eq!(t.next.as_deref(), Some("two"));
        assert_eq!(e.state().current_index, 2);
        assert_eq!(e.state().stages[0].attempts, 3);
        assert_eq!(e.state().stages[1].attempts, 0);

        fs::write(dir.path().join("two.txt"), "x").unwrap();
        fs::write(dir.path().join("three.txt"), "x").unwrap();
        e.complete_stage().unwrap();
        let t = e.complete_stage().unwrap();
        assert!(t.finished && t.next.is_none());
        assert!(matches!(e.complete_stage(), Err(EngineError::AlreadyFinished)));
        assert!(matches!(e.run_check(), Err(EngineError::AlreadyFinished)));
        assert!(e.current_stage().is_none());
        e.state().validate(e.config()).unwrap();
    }

    #[test]
    fn repeated_failures_count_monotonically() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = engine(dir.path());
        for n in 1..=5 {
            assert!(!e.run_check().unwrap().passed());
            assert_eq!(e.state().stages[0].failures, n);
            assert_eq!(e.state().stages[0].attempts, n);
        }
    }

    #[test]
    fn fresh_state_starting_on_skipped_stage_moves_forward() {
        let yaml = "version: '1'\nstages:\n  - {name: m, skippable: true}\n  - {name: a}\nskip: [m]\n";
        let cfg = WorkflowConfig::from_yaml(yaml, &CheckerRegistry::default()).unwrap();
        let state = WorkflowState::fresh(&cfg);
        let e = Engine::new(cfg, state, ".", Box::new(MemoryStore::default())).unwrap();
        assert_eq!(e.current_stage().unwrap().name, "a");
        assert_eq!(e.current_stage().unwrap().index, 1);
    }

    #[test]
    fn stage_view_lists_checkers() {
        let dir = tempfile::tempdir().unwrap();
        let e = engine(dir.path());
        let view = e.current_stage().unwrap();
        assert_eq!(view.checkers, ["file_exists paths=[\"one.txt\"]"]);
        assert!(view.render().contains("Stage 1/4: one"));
    }
}
