//! Telemetry plus label-closure summary for a workspace.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifacts::{BugDocument, CoverageModel, SpecDocument, TestReport};
use crate::checker::{parse_params, ClosureSummary, CoverageConsistencyParams, TestReportClosureParams};
use crate::label::diff_bidirectional;
use crate::workflow::{telemetry_report, TelemetryReport, WorkflowConfig, WorkflowState};

/// Closure counts computed from the artifacts named by the last
/// `test_report_closure` and `coverage_consistency` checkers in the config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClosureReport {
    pub spec: Option<String>,
    /// Check points defined by the specification document.
    pub total: usize,
    /// Defined check points marked by at least one non-skipped test.
    pub exercised: usize,
    /// Defined check points absent from the coverage model.
    pub missing: usize,
    /// Coverage model paths the specification does not define.
    pub extra: usize,
    /// Test marks the specification does not define.
    pub unknown_marks: usize,
    /// Check points marked by failing tests but absent from the bug document.
    pub untraced_failures: usize,
    /// Artifacts that could not be read, in which case the counts that
    /// depend on them stay zero.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceReport {
    pub telemetry: TelemetryReport,
    pub closure: ClosureReport,
}

fn last_params<T: serde::de::DeserializeOwned>(config: &WorkflowConfig, kind: &str) -> Option<T> {
    config
        .flat()
        .iter()
        .rev()
        .flat_map(|s| s.checkers.iter().rev())
        .find(|c| c.kind == kind)
        .and_then(|c| parse_params(&c.params).ok())
}

fn read(workspace: &Path, rel: &str, notes: &mut Vec<String>) -> Option<String> {
    match fs::read_to_string(workspace.join(rel)) {
        Ok(text) => Some(text),
        Err(e) => {
            notes.push(format!("{rel}: {e}"));
            None
        }
    }
}

pub fn closure_report(config: &WorkflowConfig, workspace: &Path) -> ClosureReport {
    let mut out = ClosureReport::default();
    let closure: Option<TestReportClosureParams> = last_params(config, "test_report_closure");
    let consistency: Option<CoverageConsistencyParams> = last_params(config, "coverage_consistency");
    let spec_rel = closure
        .as_ref()
        .map(|c| c.spec.clone())
        .or_else(|| consistency.as_ref().map(|c| c.spec.clone()));
    let Some(spec_rel) = spec_rel else {
        out.notes.push("no closure or consistency checker configured".into());
        return out;
    };
    out.spec = Some(spec_rel.clone());
    let Some(spec_text) = read(workspace, &spec_rel, &mut out.notes) else {
        return out;
    };
    let spec = SpecDocument::from_text(&spec_rel, spec_text);
    let spec_paths = spec.paths();
    out.total = spec_paths.len();

    if let Some(cons) = &consistency {
        let mut model = CoverageModel::default();
        let mut complete = true;
        for rel in &cons.coverage {
            match read(workspace, rel, &mut out.notes) {
                Some(text) => model.add_source(rel, &text),
                None => complete = false,
            }
        }
        if complete {
            let diff = diff_bidirectional(&spec_paths, &model.paths);
            out.missing = diff.missing.len();
            out.extra = diff.extra.len();
        }
    }

    if let Some(cl) = &closure {
        let report = read(workspace, &cl.report, &mut out.notes).and_then(|text| {
            TestReport::from_json(Path::new(&cl.report), &text)
                .map_err(|e| out.notes.push(e.to_string()))
                .ok()
        });
        if let Some(report) = report {
            let bugs = fs::read_to_string(workspace.join(&cl.bugs)).unwrap_or_default();
            let bugs = BugDocument::from_text(&cl.bugs, &bugs);
            let summary = ClosureSummary::compute(&spec_paths, &report, &bugs);
            out.exercised = summary.exercised;
            out.unknown_marks = summary.unknown_marks.len();
            out.untraced_failures = summary.untraced_failures.len();
        }
    }
    out
}

/// A pure function of the state and the workspace artifacts.
pub fn workspace_report(state: &WorkflowState, config: &WorkflowConfig, workspace: &Path) -> WorkspaceReport {
    WorkspaceReport {
        telemetry: telemetry_report(state, config),
        closure: closure_report(config, workspace),
    }
}

impl WorkspaceReport {
    pub fn render_table(&self) -> String {
        let mut out = self.telemetry.render_table();
        let c = &self.closure;
        let _ = writeln!(out);
        let _ = writeln!(out, "label closure ({})", c.spec.as_deref().unwrap_or("none"));
        let pct = if c.total == 0 {
            0.0
        } else {
            100.0 * c.exercised as f64 / c.total as f64
        };
        let _ = writeln!(out, "  total check points  {}", c.total);
        let _ = writeln!(out, "  exercised           {} ({pct:.1}%)", c.exercised);
        let _ = writeln!(out, "  missing             {}", c.missing);
        let _ = writeln!(out, "  extra               {}", c.extra);
        let _ = writeln!(out, "  unknown marks       {}", c.unknown_marks);
        let _ = writeln!(out, "  untraced failures   {}", c.untraced_failures);
        for note in &c.notes {
            let _ = writeln!(out, "  note: {note}");
        }
        out
    }
}
