use std::collections::HashSet;
use std::io;
use std::path::Path;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use super::protocol::{ErrorKind, ToolRequest, ToolResponse};
use super::sandbox::{Sandbox, SandboxError};
use crate::artifacts::TestReport;
use crate::checker::{run_command, CheckResult, DEFAULT_TAIL_BYTES};
use crate::workflow::{Engine, EngineError, WorkflowState};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoArgs {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunTestArgs {
    #[serde(default)]
    command: Option<String>,
    #[serde(default)]
    report_path: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReadArgs {
    path: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WriteArgs {
    path: String,
    content: String,
}

struct Fault(ErrorKind, String);

impl From<SandboxError> for Fault {
    fn from(err: SandboxError) -> Self {
        match err {
            SandboxError::PathEscape(_) => Fault(ErrorKind::PathEscape, err.to_string()),
            SandboxError::Io { .. } => Fault(ErrorKind::Io, err.to_string()),
        }
    }
}

impl From<EngineError> for Fault {
    fn from(err: EngineError) -> Self {
        match err {
            EngineError::AlreadyFinished => Fault(ErrorKind::AlreadyFinished, "already finished".into()),
            other => Fault(ErrorKind::Internal, other.to_string()),
        }
    }
}

fn args<T: DeserializeOwned>(tool: &str, map: &Map<String, Value>) -> Result<T, Fault> {
    serde_json::from_value(Value::Object(map.clone()))
        .map_err(|e| Fault(ErrorKind::InvalidArgs, format!("invalid arguments for {tool}: {e}")))
}

fn render_result(result: &CheckResult) -> String {
    result
        .messages()
        .iter()
        .map(|m| m.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

/// One agent session over one engine. Requests are handled strictly in
/// order; every request receives exactly one response echoing its id.
pub struct Session {
    engine: Engine,
    sandbox: Sandbox,
    seen: HashSet<String>,
}

impl Session {
    pub fn new(engine: Engine) -> io::Result<Self> {
        let sandbox = Sandbox::new(engine.workspace())?;
        Ok(Session {
            engine,
            sandbox,
            seen: HashSet::new(),
        })
    }

    /// Makes `path` read-only for `WriteArtifact`.
    pub fn protect(&mut self, path: &Path) {
        self.sandbox.protect(path);
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn engine_mut(&mut self) -> &mut Engine {
        &mut self.engine
    }

    pub fn state(&self) -> &WorkflowState {
        self.engine.state()
    }

    pub fn finished(&self) -> bool {
        self.engine.finished()
    }

    /// Name of the active stage, if any.
    pub fn current_stage_name(&self) -> Option<String> {
        self.engine.current_stage().map(|v| v.name)
    }

    pub fn persist(&mut self) -> Result<(), EngineError> {
        self.engine.persist()
    }

    pub fn handle(&mut self, req: &ToolRequest) -> ToolResponse {
        if !self.seen.insert(req.id.clone()) {
            return ToolResponse::error(
                &req.id,
                ErrorKind::DuplicateId,
                format!("duplicate request id `{}`", req.id),
            );
        }
        match self.dispatch(req) {
            Ok((content, message)) => ToolResponse::ok(&req.id, content, message),
            Err(Fault(kind, message)) => ToolResponse::error(&req.id, kind, message),
        }
    }

    fn dispatch(&mut self, req: &ToolRequest) -> Result<(Value, String), Fault> {
        let tool = req.tool.as_str();
        match tool {
            "GetCurrentTips" => {
                args::<NoArgs>(tool, &req.args)?;
                Ok(match self.engine.current_stage() {
                    Some(view) => {
                        let text = view.render();
                        (serde_json::to_value(&view).expect("view serializes"), text)
                    }
                    None => (json!({ "finished": true }), "workflow finished".into()),
                })
            }
            "Check" => {
                args::<NoArgs>(tool, &req.args)?;
                let stage = self.current_stage_name();
                let result = self.engine.run_check()?;
                let text = if result.passed() {
                    "all checkers passed".to_string()
                } else {
                    render_result(&result)
                };
                Ok((
                    json!({
                        "stage": stage,
                        "passed": result.passed(),
                        "messages": result.messages(),
                    }),
                    text,
                ))
            }
            "Complete" => {
                args::<NoArgs>(tool, &req.args)?;
                let t = self.engine.complete_stage()?;
                let text = match (&t.next, t.advanced) {
                    (_, false) => render_result(&t.result),
                    (Some(next), true) => format!("stage {} complete; next stage: {next}", t.stage),
                    (None, true) => format!("stage {} complete; workflow finished", t.stage),
                };
                Ok((
                    json!({
                        "stage": t.stage,
                        "passed": t.result.passed(),
                        "advanced": t.advanced,
                        "next": t.next,
                        "finished": t.finished,
                        "messages": t.result.messages(),
                    }),
                    text,
                ))
            }
            "Status" => {
                args::<NoArgs>(tool, &req.args)?;
                let status = self.engine.status();
                let text = match &status.current {
                    Some(name) => format!("stage {}/{}: {name}", status.current_index + 1, status.total),
                    None => "workflow finished".into(),
                };
                Ok((serde_json::to_value(&status).expect("status serializes"), text))
            }
            "RunTest" => {
                let a = args::<RunTestArgs>(tool, &req.args)?;
                self.run_test(a)
            }
            "ReadArtifact" => {
                let a = args::<ReadArgs>(tool, &req.args)?;
                let content = self.sandbox.read(&a.path)?;
                Ok((json!({ "path": a.path, "content": content }), format!("read {}", a.path)))
            }
            "WriteArtifact" => {
                let a = args::<WriteArgs>(tool, &req.args)?;
                self.sandbox.write(&a.path, &a.content)?;
                Ok((
                    json!({ "path": a.path, "bytes": a.content.len() }),
                    format!("wrote {} bytes to {}", a.content.len(), a.path),
                ))
            }
            other => Err(Fault(ErrorKind::UnknownTool, format!("unknown tool `{other}`"))),
        }
    }

    fn run_test(&mut self, a: RunTestArgs) -> Result<(Value, String), Fault> {
        let config = self.engine.config();
        let cmd = match &a.command {
            Some(name) => config.command(name),
            None => config.commands.first(),
        }
        .ok_or_else(|| {
            Fault(
                ErrorKind::NotAllowlisted,
                match &a.command {
                    Some(name) => format!("command `{name}` is not allowlisted"),
                    None => "no commands are allowlisted".into(),
                },
            )
        })?
        .clone();
        let report_rel = a
            .report_path
            .or_else(|| cmd.report_path.clone())
            .ok_or_else(|| Fault(ErrorKind::InvalidArgs, "report_path is required".into()))?;
        let report = self.sandbox.resolve_for_write(&report_rel)?;
        if report.is_file() {
            std::fs::remove_file(&report)
                .map_err(|e| Fault(ErrorKind::Io, format!("cannot clear stale report {report_rel}: {e}")))?;
        }
        let argv: Vec<String> = cmd
            .args
            .iter()
            .map(|arg| arg.replace("{report_path}", &report_rel))
            .collect();
        let timeout = Duration::from_secs_f64(cmd.timeout_s.max(0.0));
        let outcome = run_command(&cmd.command, &argv, self.sandbox.root(), timeout, DEFAULT_TAIL_BYTES)
            .map_err(|e| Fault(ErrorKind::Io, format!("failed to start `{}`: {e}", cmd.name)))?;
        if outcome.timed_out {
            return Err(Fault(
                ErrorKind::Io,
                format!("`{}` timed out after {}s\n{}", cmd.name, cmd.timeout_s, outcome.output_tail()),
            ));
        }
        let text = std::fs::read_to_string(&report).map_err(|_| {
            Fault(
                ErrorKind::Report,
                format!(
                    "expected report not produced: {report_rel} (exit code {:?})\n{}",
                    outcome.exit_code,
                    outcome.output_tail()
                ),
            )
        })?;
        let parsed = TestReport::from_json(Path::new(&report_rel), &text)
            .map_err(|e| Fault(ErrorKind::Report, e.to_string()))?;
        let summary = parsed.summary();
        let failing: Vec<&str> = parsed
            .cases
            .iter()
            .filter(|c| c.status == crate::artifacts::TestStatus::Fail)
            .map(|c| c.name.as_str())
            .collect();
        let message = format!(
            "{} cases: {} passed, {} failed, {} skipped",
            summary.total, summary.passed, summary.failed, summary.skipped
        );
        Ok((
            json!({
                "command": cmd.name,
                "exit_code": outcome.exit_code,
                "report_path": report_rel,
                "summary": summary,
                "failing": failing,
                "output_tail": outcome.output_tail(),
            }),
            message,
        ))
    }
}
