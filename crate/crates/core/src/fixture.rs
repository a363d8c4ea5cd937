//! The alu8 example workspace: default workflow, toy design, test runner
//! and a scripted trace that drives the workflow to completion.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::json;
use thiserror::Error;

use crate::gateway::{render_trace, Expect, ResponseStatus, ToolRequest, TraceStep};

pub const DEFAULT_CONFIG: &str = include_str!("../assets/stagegate.yaml");
pub const ALU_SCRIPT: &str = include_str!("../assets/alu8.sh");
pub const RUNNER_SCRIPT: &str = include_str!("../assets/run_tests.sh");
pub const ALU_SPEC: &str = include_str!("../assets/alu8_spec.md");
pub const COVERAGE_STUB: &str = include_str!("../assets/coverage_model.txt");

pub const GOLDEN_TRACE_PATH: &str = "traces/golden.jsonl";

/// Stages where the golden trace deliberately fails once before fixing
/// its artifacts.
pub const GOLDEN_INJECTED_FAILURES: [(&str, u64); 2] = [("coverage_points", 1), ("bug_analysis", 1)];

#[derive(Debug, Error)]
pub enum ScaffoldError {
    #[error("{0} is not empty; pass --force to overwrite")]
    TargetNotEmpty(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

/// Every file written by [`scaffold`], as (workspace-relative path, content).
pub fn fixture_files() -> Vec<(&'static str, String)> {
    vec![
        ("stagegate.yaml", DEFAULT_CONFIG.to_string()),
        ("dut/alu8.sh", ALU_SCRIPT.to_string()),
        ("dut/run_tests.sh", RUNNER_SCRIPT.to_string()),
        ("dut/alu8_spec.md", ALU_SPEC.to_string()),
        ("verif/coverage_model.txt", COVERAGE_STUB.to_string()),
        (GOLDEN_TRACE_PATH, render_trace(&golden_trace())),
    ]
}

/// Writes the example workspace into `target`, creating it if needed.
/// A non-empty target is refused unless `force` is set.
pub fn scaffold(target: &Path, force: bool) -> Result<Vec<PathBuf>, ScaffoldError> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| ScaffoldError::Io { path, source }
    };
    if target.exists() {
        let mut entries = fs::read_dir(target).map_err(io_err(target))?;
        if entries.next().is_some() && !force {
            return Err(ScaffoldError::TargetNotEmpty(target.display().to_string()));
        }
    }
    let mut written = Vec::new();
    for (rel, content) in fixture_files() {
        let path = target.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::write(&path, content).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

struct TraceBuilder {
    steps: Vec<TraceStep>,
    stage: &'static str,
}

impl TraceBuilder {
    fn push(&mut self, tool: &str, args: serde_json::Value, expect: Expect) {
        let id = format!("g{:03}", self.steps.len() + 1);
        self.steps
            .push(TraceStep::new(ToolRequest::new(id, tool, args)).expect(expect).in_stage(self.stage));
    }

    fn stage(&mut self, name: &'static str) -> &mut Self {
        self.stage = name;
        self.push("GetCurrentTips", json!({}), Expect::status(ResponseStatus::Ok));
        self
    }

    fn write(&mut self, path: &str, content: &str) -> &mut Self {
        self.push(
            "WriteArtifact",
            json!({ "path": path, "content": content }),
            Expect::status(ResponseStatus::Ok),
        );
        self
    }

    fn run_test(&mut self, command: &str) -> &mut Self {
        self.push("RunTest", json!({ "command": command }), Expect::status(ResponseStatus::Ok));
        self
    }

    fn check(&mut self, passed: bool) -> &mut Self {
        let expect = Expect {
            status: Some(ResponseStatus::Ok),
            passed: Some(passed),
            advanced: None,
        };
        self.push("Check", json!({}), expect);
        self
    }

    fn complete(&mut self) -> &mut Self {
        let expect = Expect {
            status: Some(ResponseStatus::Ok),
            passed: Some(true),
            advanced: Some(true),
        };
        self.push("Complete", json!({}), expect);
        self
    }
}

const COVERAGE_MISNAMED: &str = "\
covergroup <FG-ARITH>
  coverpoint <FC-ADD>
    bin <CK-BASIC>
    bin <CK-OVERFLOW>
  coverpoint <FC-SUB>
    bin <CK-BASIC>
    bin <CK-BORROW>
    bin <CK-UNDERFLOW>
covergroup <FG-LOGIC>
  coverpoint <FC-AND>
    bin <CK-BASIC>
  coverpoint <FC-XOR>
    bin <CK-BASIC>
";

const COVERAGE_FIXED: &str = "\
covergroup <FG-ARITH>
  coverpoint <FC-ADD>
    bin <CK-BASIC>
    bin <CK-CARRY>
  coverpoint <FC-SUB>
    bin <CK-BASIC>
    bin <CK-BORROW>
covergroup <FG-LOGIC>
  coverpoint <FC-AND>
    bin <CK-BASIC>
  coverpoint <FC-XOR>
    bin <CK-BASIC>
";

const API_SCRIPT: &str = "\
#!/bin/sh
# Test API over the alu8 model.
here=$(dirname \"$0\")
alu() { sh \"$here/../dut/alu8.sh\" \"$@\"; }
case ${1:-} in
    selftest)
        [ \"$(alu and 12 10)\" = \"8 0\" ] || exit 1
        [ \"$(alu add 1 2)\" = \"3 0\" ] || exit 1
        echo selftest ok
        ;;
    *) alu \"$@\" ;;
esac
";

const CASES_ARITH: &str = "\
# name op a b result flag marks
add_basic add 20 22 42 0 FG-ARITH/FC-ADD/CK-BASIC
add_carry add 200 100 44 1 FG-ARITH/FC-ADD/CK-CARRY
sub_basic sub 50 8 42 0 FG-ARITH/FC-SUB/CK-BASIC
sub_borrow sub 5 10 251 1 FG-ARITH/FC-SUB/CK-BORROW
";

const CASES_LOGIC: &str = "\
# name op a b result flag marks
and_basic and 12 10 8 0 FG-LOGIC/FC-AND/CK-BASIC
xor_basic xor 12 10 6 0 FG-LOGIC/FC-XOR/CK-BASIC
";

/// Scripted run of the default workflow over the alu8 fixture. It makes
/// two mistakes on the way, one per entry of [`GOLDEN_INJECTED_FAILURES`]:
/// a coverage model with a renamed and an invented bin, and a closure
/// check before the failing test has been written up.
pub fn golden_trace() -> Vec<TraceStep> {
    let mut t = TraceBuilder {
        steps: Vec::new(),
        stage: "",
    };
    t.stage("dut_overview")
        .write(
            "docs/dut_overview.md",
            "# alu8\n\nAn 8-bit ALU with add, sub, and, or and xor. Each operation prints an 8-bit result and a flag.\n",
        )
        .complete();
    t.stage("interface_analysis")
        .write(
            "docs/interface.md",
            "# Interface\n\n`sh dut/alu8.sh OP A B` with A, B in 0..255 prints `RESULT FLAG`.\n",
        )
        .complete();
    t.stage("function_groups")
        .write("docs/function_groups.md", "- ARITH: add, sub\n- LOGIC: and, xor\n")
        .complete();
    t.stage("check_points")
        .write("docs/functional_spec.md", ALU_SPEC)
        .complete();
    t.stage("functional_spec").check(true).complete();
    t.stage("verification_plan")
        .write(
            "docs/verification_plan.md",
            "# Plan\n\nOne directed case per check point; failures are analysed in docs/bugs.md.\n",
        )
        .complete();
    t.stage("dut_wrapper")
        .write(
            "verif/dut_wrapper.sh",
            "#!/bin/sh\n# Prints the result and the flag on separate lines.\nsh dut/alu8.sh \"$@\" | tr ' ' '\\n'\n",
        )
        .complete();
    t.stage("fixture")
        .write("verif/fixture.sh", "#!/bin/sh\n# No per-test state to set up.\nexit 0\n")
        .complete();
    t.stage("port_bindings")
        .write("verif/ports.md", "| argument | meaning |\n|---|---|\n| 1 | op |\n| 2 | A |\n| 3 | B |\n")
        .complete();
    t.stage("smoke_cases")
        .write(
            "verif/smoke_cases.txt",
            "smoke_add add 1 1 2 0 -\nsmoke_xor xor 3 1 2 0 -\n",
        )
        .complete();
    t.stage("smoke_test").run_test("smoke_tests").complete();
    t.stage("coverage_groups")
        .write("verif/coverage_model.txt", COVERAGE_MISNAMED)
        .complete();
    t.stage("coverage_points")
        .check(false)
        .write("verif/coverage_model.txt", COVERAGE_FIXED)
        .complete();
    t.stage("coverage_model").complete();
    t.stage("api_design")
        .write("docs/api.md", "# API\n\n`sh verif/api.sh OP A B` forwards to the design.\n")
        .complete();
    t.stage("api_implementation")
        .write("verif/api.sh", API_SCRIPT)
        .complete();
    t.stage("api_selftest").complete();
    t.stage("coverage_sampling")
        .write(
            "docs/coverage_sampling.md",
            "Bins are sampled from the case marks of each test report.\n",
        )
        .complete();
    t.stage("test_template")
        .write("verif/test_template.txt", "# name op a b result flag marks\n")
        .complete();
    t.stage("arith_cases")
        .write("verif/cases_arith.txt", CASES_ARITH)
        .complete();
    t.stage("logic_cases")
        .write("verif/cases_logic.txt", CASES_LOGIC)
        .complete();
    t.stage("test_implementation").complete();
    t.stage("test_execution").run_test("unit_tests").complete();
    t.stage("bug_analysis")
        .check(false)
        .write(
            "docs/bugs.md",
            "# Bugs\n\n## FG-ARITH/FC-SUB/CK-BORROW\n\nCase sub_borrow expects `251 1` but the design returns `123 1`: \
bit 7 of the result is cleared whenever a borrow occurs.\n",
        )
        .complete();
    t.stage("coverage_closure").check(true).complete();
    t.stage("final_report")
        .write(
            "docs/final_report.md",
            "# Result\n\nAll 6 check points exercised; 1 design bug logged against FG-ARITH/FC-SUB/CK-BORROW.\n",
        )
        .complete();
    t.steps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::CheckerRegistry;
    use crate::workflow::WorkflowConfig;

    #[test]
    fn default_config_has_31_stages_in_four_phases() {
        let cfg = WorkflowConfig::from_yaml(DEFAULT_CONFIG, &CheckerRegistry::default()).unwrap();
        assert_eq!(cfg.len(), 31);
        let mut phases: Vec<&str> = cfg.flat().iter().map(|s| s.phase.as_str()).collect();
        phases.dedup();
        assert_eq!(
            phases,
            ["requirement_analysis", "infrastructure", "coverage_interface", "testcase"]
        );
        assert_eq!(cfg.skip.len(), 5);
    }

    #[test]
    fn golden_trace_visits_every_active_stage_in_order() {
        let cfg = WorkflowConfig::from_yaml(DEFAULT_CONFIG, &CheckerRegistry::default()).unwrap();
        let active: Vec<&str> = cfg
            .flat()
            .iter()
            .enumerate()
            .filter(|(i, _)| !cfg.is_skipped(*i))
            .map(|(_, s)| s.name.as_str())
            .collect();
        let mut visited: Vec<&str> = golden_trace()
            .iter()
            .filter_map(|s| s.stage.as_deref())
            .map(|s| cfg.flat()[cfg.index_of(s).unwrap()].name.as_str())
            .collect();
        visited.dedup();
        assert_eq!(visited, active);
    }

    #[test]
    fn scaffold_refuses_non_empty_and_is_idempotent_with_force() {
        let dir = tempfile::tempdir().unwrap();
        scaffold(dir.path(), false).unwrap();
        assert!(matches!(scaffold(dir.path(), false), Err(ScaffoldError::TargetNotEmpty(_))));
        let before = fs::read(dir.path().join(GOLDEN_TRACE_PATH)).unwrap();
        scaffold(dir.path(), true).unwrap();
        assert_eq!(fs::read(dir.path().join(GOLDEN_TRACE_PATH)).unwrap(), before);
    }
}
