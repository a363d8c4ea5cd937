use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::WorkflowConfig;
use super::state::WorkflowState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub name: String,
    pub phase: String,
    pub attempts: u64,
    pub failures: u64,
    pub elapsed_s: f64,
    pub passed: bool,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub phase: String,
    pub stages: usize,
    pub attempts: u64,
    pub failures: u64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub stages: usize,
    pub passed: usize,
    pub skipped: usize,
    pub attempts: u64,
    pub failures: u64,
    pub elapsed_s: f64,
}

/// Per-stage and per-phase counters. Phase totals sum the stage rows of
/// that phase; the grand totals sum all stage rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryReport {
    pub stages: Vec<StageRow>,
    pub phases: Vec<PhaseRow>,
    pub totals: Totals,
}

pub fn telemetry_report(state: &WorkflowState, config: &WorkflowConfig) -> TelemetryReport {
    let stages: Vec<StageRow> = config
        .flat()
        .iter()
        .zip(&state.stages)
        .enumerate()
        .map(|(i, (stage, t))| StageRow {
            name: stage.name.clone(),
            phase: stage.phase.clone(),
            attempts: t.attempts,
            failures: t.failures,
            elapsed_s: t.elapsed_s,
            passed: t.passed,
            skipped: config.is_skipped(i),
        })
        .collect();

    let mut phases: Vec<PhaseRow> = Vec::new();
    for row in &stages {
        let idx = match phases.iter().position(|p| p.phase == row.phase) {
            Some(i) => i,
            None => {
                phases.push(PhaseRow {
                    phase: row.phase.clone(),
                    stages: 0,
                    attempts: 0,
                    failures: 0,
                    elapsed_s: 0.0,
                });
                phases.len() - 1
            }
        };
        let p = &mut phases[idx];
        p.stages += 1;
        p.attempts += row.attempts;
        p.failures += row.failures;
        p.elapsed_s += row.elapsed_s;
    }

    let totals = Totals {
        stages: stages.len(),
        passed: stages.iter().filter(|r| r.passed).count(),
        skipped: stages.iter().filter(|r| r.skipped).count(),
        attempts: stages.iter().map(|r| r.attempts).sum(),
        failures: stages.iter().map(|r| r.failures).sum(),
        elapsed_s: stages.iter().map(|r| r.elapsed_s).sum(),
    };
    TelemetryReport { stages, phases, totals }
}

impl TelemetryReport {
    pub fn render_table(&self) -> String {
        let width = self
            .stages
            .iter()
            .map(|r| r.name.len())
            .chain(self.phases.iter().map(|p| p.phase.len()))
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>8}  {:>10}  status",
            "stage", "attempts", "failures", "elapsed_s"
        );
        for r in &self.stages {
            let status = if r.skipped {
                "skipped"
            } else if r.passed {
                "passed"
            } else {
                "pending"
            };
            let _ = writeln!(
                out,
                "{:<width$}  {:>8}  {:>8}  {:>10.3}  {status}",
                r.name, r.attempts, r.failures, r.elapsed_s
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>8}  {:>10}  stages",
            "phase", "attempts", "failures", "elapsed_s"
        );
        for p in &self.phases {
            let _ = writeln!(
                out,
                "{:<width$}  {:>8}  {:>8}  {:>10.3}  {}",
                p.phase, p.attempts, p.failures, p.elapsed_s, p.stages
            );
        }
        let t = &self.totals;
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>8}  {:>10.3}  {} ({} passed, {} skipped)",
            "total", t.attempts, t.failures, t.elapsed_s, t.stages, t.passed, t.skipped
        );
        out
    }
}
