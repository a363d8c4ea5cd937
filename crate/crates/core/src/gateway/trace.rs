use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::protocol::{ResponseStatus, ToolRequest, ToolResponse};
use super::session::Session;
use crate::workflow::{EngineError, WorkflowState};

/// Assertions a trace step makes about its response.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<ResponseStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advanced: Option<bool>,
}

impl Expect {
    pub fn status(status: ResponseStatus) -> Self {
        Expect {
            status: Some(status),
            ..Expect::default()
        }
    }

    fn unmet(&self, resp: &ToolResponse) -> Option<String> {
        if let Some(s) = self.status {
            if s != resp.status {
                return Some(format!("status {:?}, got {:?}", s, resp.status));
            }
        }
        if let Some(p) = self.passed {
            if resp.passed() != Some(p) {
                return Some(format!("passed={p}, got {:?}", resp.passed()));
            }
        }
        if let Some(a) = self.advanced {
            if resp.advanced() != Some(a) {
                return Some(format!("advanced={a}, got {:?}", resp.advanced()));
            }
        }
        None
    }
}

/// One line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceStep {
    pub request: ToolRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expect>,
    /// Stage that was active when the request was issued.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    /// Response recorded when the trace was captured; ignored on replay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<ToolResponse>,
}

impl TraceStep {
    pub fn new(request: ToolRequest) -> Self {
        TraceStep {
            request,
            expect: None,
            stage: None,
            response: None,
        }
    }

    pub fn expect(mut self, expect: Expect) -> Self {
        self.expect = Some(expect);
        self
    }

    pub fn in_stage(mut self, stage: impl Into<String>) -> Self {
        self.stage = Some(stage.into());
        self
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("trace line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceStep>, TraceError> {
    let mut steps = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let step = serde_json::from_str(line).map_err(|e| TraceError::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?;
        steps.push(step);
    }
    Ok(steps)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceStep>, TraceError> {
    let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_trace(&text)
}

pub fn render_trace(steps: &[TraceStep]) -> String {
    let mut out = String::new();
    for step in steps {
        out.push_str(&serde_json::to_string(step).expect("trace step serializes"));
        out.push('\n');
    }
    out
}

/// Appends trace steps to a JSONL file as they happen.
pub struct TraceWriter {
    file: File,
}

impl TraceWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(TraceWriter { file })
    }

    pub fn record(&mut self, step: &TraceStep) -> io::Result<()> {
        let mut line = serde_json::to_vec(step).expect("trace step serializes");
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReplayOptions {
    /// Skip steps annotated with a stage that precedes the active one, so a
    /// restored session picks up where the recorded run left off.
    pub resume: bool,
    /// Maximum number of requests to issue.
    pub budget: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub responses: Vec<ToolResponse>,
    pub issued: usize,
    pub skipped: usize,
    pub finished: bool,
    pub state: WorkflowState,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("trace step {index} (`{tool}`): expected {detail}")]
    AssertionMismatch {
        index: usize,
        tool: String,
        detail: String,
        response: Box<ToolResponse>,
    },
    #[error("step budget of {budget} exhausted")]
    StepBudgetExhausted { budget: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Issues each trace request in order and stops at the first unmet
/// assertion. State is persisted before any error is returned.
pub fn replay(trace: &[TraceStep], session: &mut Session, opts: &ReplayOptions) -> Result<ReplayOutcome, ReplayError> {
    let mut responses = Vec::new();
    let mut skipped = 0;
    for (index, step) in trace.iter().enumerate() {
        if opts.resume && step_precedes_active(step, session) {
            skipped += 1;
            continue;
        }
        if let Some(budget) = opts.budget {
            if responses.len() >= budget {
                session.persist()?;
                return Err(ReplayError::StepBudgetExhausted { budget });
            }
        }
        let resp = session.handle(&step.request);
        if let Some(detail) = step.expect.as_ref().and_then(|e| e.unmet(&resp)) {
            session.persist()?;
            return Err(ReplayError::AssertionMismatch {
                index,
                tool: step.request.tool.clone(),
                detail,
                response: Box::new(resp),
            });
        }
        responses.push(resp);
    }
    session.persist()?;
    Ok(ReplayOutcome {
        issued: responses.len(),
        responses,
        skipped,
        finished: session.finished(),
        state: session.state().clone(),
    })
}

fn step_precedes_active(step: &TraceStep, session: &Session) -> bool {
    let Some(stage) = &step.stage else {
        return false;
    };
    let config = session.engine().config();
    match config.index_of(stage) {
        Some(i) => i < session.state().current_index,
        None => false,
    }
}

/// Serves newline-delimited requests from `input` until end of stream,
/// writing one response line per request. State is persisted before
/// returning, also when the peer goes away mid-write.
pub fn serve<R: BufRead, W: Write>(session: &mut Session, input: R, mut output: W) -> Result<usize, EngineError> {
    let mut handled = 0;
    for line in input.lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<ToolRequest>(&line) {
            Ok(req) => session.handle(&req),
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|i| i.as_str()).map(str::to_string))
                    .unwrap_or_default();
                ToolResponse::error(id, super::ErrorKind::MalformedRequest, format!("malformed request: {e}"))
            }
        };
        handled += 1;
        let mut bytes = serde_json::to_vec(&resp).expect("response serializes");
        bytes.push(b'\n');
        if output.write_all(&bytes).and_then(|_| output.flush()).is_err() {
            break;
        }
    }
    session.persist()?;
    Ok(handled)
}
