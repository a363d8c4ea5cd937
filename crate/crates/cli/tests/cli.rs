use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use stagegate::fixture::{golden_trace, GOLDEN_TRACE_PATH};
use stagegate::gateway::{render_trace, ToolResponse};
use stagegate::report::{workspace_report, WorkspaceReport};
use stagegate::workflow::{load_config, restore, WorkflowState};
use stagegate::workspace::state_path;

fn stagegate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stagegate"))
        .args(args)
        .stdin(Stdio::null())
        .output()
        .expect("binary runs")
}

fn ws_cmd(ws: &Path, args: &[&str]) -> Output {
    let mut full = vec!["--workspace", ws.to_str().unwrap()];
    full.extend_from_slice(args);
    stagegate(&full)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn init(dir: &Path) {
    let o = stagegate(&["init", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

fn final_state(ws: &Path) -> WorkflowState {
    let cfg = load_config(&ws.join("stagegate.yaml")).unwrap();
    restore(&state_path(ws), &cfg).unwrap()
}

fn golden_arg(ws: &Path) -> String {
    format!("scripted:{}", ws.join(GOLDEN_TRACE_PATH).display())
}

#[test]
fn init_then_scripted_run_finishes() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    init(&ws);
    let o = ws_cmd(&ws, &["run", "--agent", &golden_arg(&ws)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("workflow finished"));
    assert!(final_state(&ws).finished());

    let status = ws_cmd(&ws, &["status"]);
    assert_eq!(status.status.code(), Some(0));
    assert!(stdout(&status).starts_with("finished: 31 of 31"));
}

#[test]
fn init_refuses_non_empty_target_and_force_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("keep.txt"), "x").unwrap();
    let o = stagegate(&["init", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not empty"));

    let target = dir.path().to_str().unwrap();
    assert_eq!(stagegate(&["init", target, "--force"]).status.code(), Some(0));
    let first = fs::read(dir.path().join("stagegate.yaml")).unwrap();
    let trace = fs::read(dir.path().join(GOLDEN_TRACE_PATH)).unwrap();
    assert_eq!(stagegate(&["init", target, "--force"]).status.code(), Some(0));
    assert_eq!(fs::read(dir.path().join("stagegate.yaml")).unwrap(), first);
    assert_eq!(fs::read(dir.path().join(GOLDEN_TRACE_PATH)).unwrap(), trace);
    assert_eq!(fs::read_to_string(dir.path().join("keep.txt")).unwrap(), "x");
}

#[test]
fn check_on_renamed_coverage_exits_one_with_both_directions() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path();
    fs::write(
        ws.join("stagegate.yaml"),
        "version: '1'\nstages:\n  - name: coverage\n    checkers:\n      - {kind: coverage_consistency, spec: spec.md, coverage: [cov.txt]}\n",
    )
    .unwrap();
    fs::write(
        ws.join("spec.md"),
        "<FG-FIFO>\n<FC-ERROR>\n<CK-OVERRUN>\n<CK-PARITY>\n<CK-FRAMING>\n",
    )
    .unwrap();
    fs::write(
        ws.join("cov.txt"),
        "<FG-FIFO> <FC-ERROR> <CK-OVERFLOW> <CK-PARITY> <CK-FRAMING> <CK-UNDERRUN>\n",
    )
    .unwrap();
    let o = ws_cmd(ws, &["check"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("omission: FG-FIFO/FC-ERROR/CK-OVERRUN"), "{out}");
    assert!(out.contains("FG-FIFO/FC-ERROR/CK-OVERFLOW"), "{out}");
    assert!(out.contains("FG-FIFO/FC-ERROR/CK-UNDERRUN"), "{out}");

    fs::write(
        ws.join("cov.txt"),
        "<FG-FIFO> <FC-ERROR> <CK-OVERRUN> <CK-PARITY> <CK-FRAMING>\n",
    )
    .unwrap();
    assert_eq!(ws_cmd(ws, &["check"]).status.code(), Some(0));
}

#[test]
fn status_on_fresh_workspace_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    init(dir.path());
    let o = ws_cmd(dir.path(), &["status"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("stage 1 of 31: dut_overview"), "{out}");
    assert_eq!(out.matches("attempts=0 failures=0 elapsed_s=0.000").count(), 31);
}

#[test]
fn report_requires_state_and_json_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    init(dir.path());
    assert_eq!(ws_cmd(dir.path(), &["report"]).status.code(), Some(3));

    assert_eq!(ws_cmd(dir.path(), &["run", "--agent", &golden_arg(dir.path())]).status.code(), Some(0));
    let o = ws_cmd(dir.path(), &["report", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let parsed: WorkspaceReport = serde_json::from_slice(&o.stdout).unwrap();
    let cfg = load_config(&dir.path().join("stagegate.yaml")).unwrap();
    let expected = workspace_report(&final_state(dir.path()), &cfg, dir.path());
    assert_eq!(parsed, expected);
    assert_eq!(parsed.telemetry.totals.failures, 2);
    assert_eq!(parsed.closure.exercised, parsed.closure.total);

    let table = ws_cmd(dir.path(), &["report"]);
    assert!(stdout(&table).contains("exercised           6 (100.0%)"));
}

#[test]
fn config_errors_exit_two_and_resume_needs_state() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("stagegate.yaml"), "version: '1'\nstages:\n  - nme: a\n").unwrap();
    let o = ws_cmd(dir.path(), &["check"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stages[0]"));

    let ok = tempfile::tempdir().unwrap();
    init(ok.path());
    assert_eq!(ws_cmd(ok.path(), &["resume", "--agent", "none"]).status.code(), Some(3));
    assert_eq!(ws_cmd(ok.path(), &["run", "--agent", "bogus"]).status.code(), Some(2));
    assert_eq!(ws_cmd(ok.path(), &["run", "--skip", "dut_overview"]).status.code(), Some(2));
}

#[test]
fn manual_agent_stops_at_first_incomplete_stage() {
    let dir = tempfile::tempdir().unwrap();
    init(dir.path());
    fs::create_dir_all(dir.path().join("docs")).unwrap();
    fs::write(dir.path().join("docs/dut_overview.md"), "x").unwrap();
    let o = ws_cmd(dir.path(), &["--non-interactive", "run", "--agent", "none"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("stage dut_overview complete"), "{out}");
    assert!(out.contains("stopped at stage 2/31: interface_analysis"), "{out}");
}

#[test]
fn budget_exhaustion_exits_one_and_resume_continues() {
    let dir = tempfile::tempdir().unwrap();
    init(dir.path());
    let o = ws_cmd(dir.path(), &["run", "--agent", &golden_arg(dir.path()), "--budget", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("budget"));
    assert!(ws_cmd(dir.path(), &["resume", "--agent", &golden_arg(dir.path())]).status.success());
    assert!(final_state(dir.path()).finished());
}

/// Kills a `serve` process with SIGKILL right after a stage transition, then
/// resumes from disk with `resume --agent scripted:` and compares the end
/// state with an uninterrupted run.
#[test]
fn resume_after_kill_matches_uninterrupted_run() {
    let reference = tempfile::tempdir().unwrap();
    init(reference.path());
    assert!(ws_cmd(reference.path(), &["run", "--agent", &golden_arg(reference.path())]).status.success());
    let expected = final_state(reference.path()).without_timing();

    let trace = golden_trace();
    let completes: Vec<usize> = trace
        .iter()
        .enumerate()
        .filter(|(_, s)| s.request.tool == "Complete")
        .map(|(i, _)| i)
        .collect();
    for &cut in [completes[0], completes[9], completes[completes.len() / 2], completes[completes.len() - 2]].iter() {
        let dir = tempfile::tempdir().unwrap();
        init(dir.path());
        let mut child = Command::new(env!("CARGO_BIN_EXE_stagegate"))
            .args(["--workspace", dir.path().to_str().unwrap(), "serve"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let mut stdin = child.stdin.take().unwrap();
        let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
        for step in &trace[..=cut] {
            let line = serde_json::to_string(&step.request).unwrap();
            writeln!(stdin, "{line}").unwrap();
            stdin.flush().unwrap();
            let resp: ToolResponse = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
            assert_eq!(resp.id, step.request.id);
        }
        child.kill().unwrap();
        child.wait().unwrap();

        let trace_file = dir.path().join("resume.jsonl");
        fs::write(&trace_file, render_trace(&trace)).unwrap();
        let o = ws_cmd(dir.path(), &["resume", "--agent", &format!("scripted:{}", trace_file.display())]);
        assert_eq!(o.status.code(), Some(0), "cut {cut}: {}", stdout(&o));
        assert_eq!(final_state(dir.path()).without_timing(), expected, "cut {cut}");
    }
}

#[test]
fn serve_answers_each_line_in_order() {
    let dir = tempfile::tempdir().unwrap();
    init(dir.path());
    let mut child = Command::new(env!("CARGO_BIN_EXE_stagegate"))
        .args(["--workspace", dir.path().to_str().unwrap(), "serve"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let input = concat!(
        r#"{"id":"a","tool":"GetCurrentTips"}"#,
        "\n",
        "not json\n",
        r#"{"id":"b","tool":"WriteArtifact","args":{"path":"../x","content":"y"}}"#,
        "\n",
        r#"{"id":"c","tool":"Check"}"#,
        "\n",
    );
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let resps: Vec<ToolResponse> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let ids: Vec<&str> = resps.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["a", "", "b", "c"]);
    assert!(resps[0].message.contains("dut_overview"));
    assert!(!resps[1].is_ok());
    assert!(!resps[2].is_ok());
    assert!(resps[3].is_ok());
    assert_eq!(resps[3].passed(), Some(false));
    assert!(!dir.path().parent().unwrap().join("x").exists());
    assert_eq!(final_state(dir.path()).stages[0].attempts, 1);
}
