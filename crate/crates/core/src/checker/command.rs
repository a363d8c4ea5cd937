use std::fs::File;
use std::io::{self, Read, Seek, SeekFrom};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::{CheckContext, CheckResult, Checker, Message};
use crate::artifacts::TestReport;

/// Bytes of captured output attached to a failure message.
pub const DEFAULT_TAIL_BYTES: usize = 4096;

fn default_timeout() -> f64 {
    60.0
}

fn default_tail() -> usize {
    DEFAULT_TAIL_BYTES
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandParams {
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    /// Workspace-relative report the command must produce.
    #[serde(default)]
    pub report_path: Option<String>,
    #[serde(default = "default_tail")]
    pub tail_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommandOutcome {
    pub exit_code: Option<i32>,
    pub timed_out: bool,
    pub stdout_tail: String,
    pub stderr_tail: String,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl CommandOutcome {
    pub fn success(&self) -> bool {
        !self.timed_out && self.exit_code == Some(0)
    }

    pub fn output_tail(&self) -> String {
        let mut out = String::new();
        if !self.stdout_tail.is_empty() {
            out.push_str("--- stdout (tail) ---\n");
            out.push_str(&self.stdout_tail);
            if !out.ends_with('\n') {
                out.push('\n');
            }
        }
        if !self.stderr_tail.is_empty() {
            out.push_str("--- stderr (tail) ---\n");
            out.push_str(&self.stderr_tail);
        }
        out
    }
}

fn tail(file: &mut File, limit: usize) -> io::Result<String> {
    let len = file.seek(SeekFrom::End(0))?;
    let start = len.saturating_sub(limit as u64);
    file.seek(SeekFrom::Start(start))?;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf)?;
    Ok(String::from_utf8_lossy(&buf).into_owned())
}

#[cfg(unix)]
fn kill_tree(child: &mut Child) {
    // The child leads its own process group; take the group down with it.
    unsafe {
        libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
    }
    let _ = child.kill();
}

#[cfg(not(unix))]
fn kill_tree(child: &mut Child) {
    let _ = child.kill();
}

/// Runs `program` in `cwd` with stdin closed, capturing the last
/// `tail_bytes` of stdout and stderr. A timeout kills the process group.
pub fn run_command(
    program: &str,
    args: &[String],
    cwd: &Path,
    timeout: Duration,
    tail_bytes: usize,
) -> io::Result<CommandOutcome> {
    let mut stdout = tempfile::tempfile()?;
    let mut stderr = tempfile::tempfile()?;
    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(cwd)
        .stdin(Stdio::null())
        .stdout(stdout.try_clone()?)
        .stderr(stderr.try_clone()?);
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    let start = Instant::now();
    let mut child = cmd.spawn()?;
    let (status, timed_out) = match child.wait_timeout(timeout)? {
        Some(status) => (Some(status), false),
        None => {
            kill_tree(&mut child);
            child.wait()?;
            (None, true)
        }
    };
    Ok(CommandOutcome {
        exit_code: status.and_then(|s| s.code()),
        timed_out,
        stdout_tail: tail(&mut stdout, tail_bytes)?,
        stderr_tail: tail(&mut stderr, tail_bytes)?,
        elapsed: start.elapsed(),
    })
}

pub fn check_command(params: &CommandParams, workspace: &Path) -> CheckResult {
    let timeout = Duration::from_secs_f64(params.timeout_s.max(0.0));
    let line = std::iter::once(params.command.as_str())
        .chain(params.args.iter().map(String::as_str))
        .collect::<Vec<_>>()
        .join(" ");
    let outcome = match run_command(&params.command, &params.args, workspace, timeout, params.tail_bytes) {
        Ok(outcome) => outcome,
        Err(err) => return CheckResult::fail(format!("failed to start `{line}`: {err}")),
    };
    if outcome.timed_out {
        return CheckResult::fail(format!(
            "`{line}` timed out after {}s\n{}",
            params.timeout_s,
            outcome.output_tail()
        ));
    }
    if !outcome.success() {
        let code = outcome
            .exit_code
            .map_or_else(|| "a signal".to_string(), |c| format!("exit code {c}"));
        return CheckResult::fail(format!("`{line}` failed with {code}\n{}", outcome.output_tail()));
    }
    if let Some(rel) = &params.report_path {
        let path = workspace.join(rel);
        match std::fs::read_to_string(&path) {
            Err(_) => {
                return CheckResult::from_messages(vec![Message::error(format!(
                    "expected report not produced: {rel}"
                ))
                .at(rel, None)])
            }
            Ok(text) => {
                if let Err(err) = TestReport::from_json(Path::new(rel), &text) {
                    return CheckResult::from_messages(vec![Message::error(err.to_string()).at(rel, None)]);
                }
            }
        }
    }
    CheckResult::pass()
}

impl Checker for CommandParams {
    fn check(&self, ctx: &CheckContext<'_>) -> CheckResult {
        check_command(self, ctx.workspace)
    }
}
