use std::collections::VecDeque;
use std::path::PathBuf;
use std::time::Duration;

use serde_json::{json, Map, Value};
use thiserror::Error;

use super::protocol::{ToolRequest, ToolResponse, TOOL_NAMES};
use super::session::Session;
use super::trace::{TraceStep, TraceWriter};
use crate::workflow::{EngineError, WorkflowState};

pub const DEFAULT_STEP_BUDGET: usize = 500;
pub const ENV_API_BASE: &str = "STAGEGATE_API_BASE";
pub const ENV_MODEL: &str = "STAGEGATE_MODEL";
pub const ENV_API_KEY: &str = "STAGEGATE_API_KEY";

/// Tool results longer than this are truncated before being sent back.
const MAX_FEEDBACK_BYTES: usize = 16 * 1024;
/// Exchanges kept in the conversation besides the system prompt.
const MAX_HISTORY: usize = 24;

const SYSTEM_PROMPT: &str = "You are a hardware verification agent working through a staged workflow. \
Each stage lists expected outputs and the checkers that gate it. Use WriteArtifact to create files, \
RunTest to execute allowlisted test commands, Check to validate the active stage and Complete to \
advance. Checker messages explain exactly what is wrong; fix the artifacts and try again. \
Call exactly one tool per reply.";

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    /// Base URL; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
        }
    }

    /// Reads the endpoint from the environment. `base_url` overrides
    /// the base URL variable when given.
    pub fn from_env(base_url: Option<&str>) -> Result<Self, DriverError> {
        let base = match base_url {
            Some(url) => url.to_string(),
            None => std::env::var(ENV_API_BASE).map_err(|_| DriverError::MissingEnv(ENV_API_BASE))?,
        };
        let model = std::env::var(ENV_MODEL).map_err(|_| DriverError::MissingEnv(ENV_MODEL))?;
        let mut cfg = EndpointConfig::new(base, model);
        cfg.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        Ok(cfg)
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone)]
pub struct DriverOptions {
    pub budget: usize,
    /// Every executed tool call is appended here as a replayable step.
    pub trace: Option<PathBuf>,
}

impl Default for DriverOptions {
    fn default() -> Self {
        DriverOptions {
            budget: DEFAULT_STEP_BUDGET,
            trace: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("environment variable {0} is not set")]
    MissingEnv(&'static str),
    #[error("endpoint {url} unreachable: {reason}")]
    EndpointUnreachable { url: String, reason: String },
    #[error("endpoint protocol error: {0}")]
    EndpointProtocol(String),
    #[error("step budget of {budget} exhausted")]
    StepBudgetExhausted { budget: usize },
    #[error("cannot write trace: {0}")]
    Trace(#[source] std::io::Error),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub steps: usize,
    pub tool_calls: usize,
    pub unparseable: usize,
    pub finished: bool,
    pub state: WorkflowState,
}

pub fn tool_schemas() -> Value {
    let no_args = json!({ "type": "object", "properties": {}, "additionalProperties": false });
    let describe = |name: &str| match name {
        "GetCurrentTips" => "Describe the active stage: task, tips, expected outputs and checkers.",
        "Check" => "Run the active stage's checkers without advancing.",
        "Complete" => "Run the active stage's checkers and advance if all pass.",
        "Status" => "Report stage index, pass state and counters.",
        "RunTest" => "Run an allowlisted test command and summarize its report.",
        "ReadArtifact" => "Read a workspace file.",
        _ => "Write a workspace file.",
    };
    let params = |name: &str| match name {
        "RunTest" => json!({
            "type": "object",
            "properties": {
                "command": { "type": "string" },
                "report_path": { "type": "string" }
            },
            "additionalProperties": false
        }),
        "ReadArtifact" => json!({
            "type": "object",
            "properties": { "path": { "type": "string" } },
            "required": ["path"],
            "additionalProperties": false
        }),
        "WriteArtifact" => json!({
            "type": "object",
            "properties": {
                "path": { "type": "string" },
                "content": { "type": "string" }
            },
            "required": ["path", "content"],
            "additionalProperties": false
        }),
        _ => no_args.clone(),
    };
    Value::Array(
        TOOL_NAMES
            .iter()
            .map(|name| {
                json!({
                    "type": "function",
                    "function": {
                        "name": name,
                        "description": describe(name),
                        "parameters": params(name),
                    }
                })
            })
            .collect(),
    )
}

struct ParsedCall {
    call_id: String,
    tool: String,
    args: Map<String, Value>,
}

/// Pulls the first tool call out of a chat-completion response. The outer
/// `Err` is a protocol fault; the inner one is a reply that does not
/// contain a usable tool call.
fn parse_reply(body: &Value) -> Result<(Value, Result<ParsedCall, String>), DriverError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| DriverError::EndpointProtocol("response has no choices[0].message".into()))?
        .clone();
    let call = (|| {
        let calls = message
            .get("tool_calls")
            .and_then(Value::as_array)
            .filter(|c| !c.is_empty())
            .ok_or("reply contains no tool call")?;
        let first = &calls[0];
        let call_id = first.get("id").and_then(Value::as_str).unwrap_or("call").to_string();
        let function = first.get("function").ok_or("tool call has no function")?;
        let tool = function
            .get("name")
            .and_then(Value::as_str)
            .ok_or("tool call has no function name")?
            .to_string();
        let args = match function.get("arguments") {
            None | Some(Value::Null) => Map::new(),
            Some(Value::String(s)) if s.trim().is_empty() => Map::new(),
            Some(Value::String(s)) => match serde_json::from_str::<Value>(s) {
                Ok(Value::Object(map)) => map,
                Ok(_) => return Err("tool arguments are not a JSON object".to_string()),
                Err(e) => return Err(format!("tool arguments are not valid JSON: {e}")),
            },
            Some(Value::Object(map)) => map.clone(),
            Some(_) => return Err("tool arguments are not a JSON object".to_string()),
        };
        Ok(ParsedCall { call_id, tool, args })
    })()
    .map_err(|e: String| e);
    Ok((message, call))
}

fn truncate(mut text: String) -> String {
    if text.len() > MAX_FEEDBACK_BYTES {
        let mut cut = MAX_FEEDBACK_BYTES;
        while !text.is_char_boundary(cut) {
            cut -= 1;
        }
        text.truncate(cut);
        text.push_str("\n[truncated]");
    }
    text
}

fn feedback(resp: &ToolResponse) -> String {
    truncate(serde_json::to_string(resp).expect("response serializes"))
}

struct Conversation {
    exchanges: VecDeque<Vec<Value>>,
}

impl Conversation {
    fn push(&mut self, exchange: Vec<Value>) {
        self.exchanges.push_back(exchange);
        while self.exchanges.len() > MAX_HISTORY {
            self.exchanges.pop_front();
        }
    }

    fn messages(&self, context: &str) -> Vec<Value> {
        let mut out = vec![
            json!({ "role": "system", "content": SYSTEM_PROMPT }),
            json!({ "role": "user", "content": context }),
        ];
        for ex in &self.exchanges {
            out.extend(ex.iter().cloned());
        }
        out
    }
}

/// Runs the fetch, reason, act, observe loop against a chat-completion
/// endpoint until the workflow finishes or the step budget runs out. Each
/// model reply counts as one step. State is persisted before returning.
pub fn llm_driver(endpoint: &EndpointConfig, session: &mut Session, opts: &DriverOptions) -> Result<RunOutcome, DriverError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(endpoint.timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let mut writer = match &opts.trace {
        Some(path) => Some(TraceWriter::create(path).map_err(DriverError::Trace)?),
        None => None,
    };
    let tools = tool_schemas();
    let mut convo = Conversation {
        exchanges: VecDeque::new(),
    };
    let mut steps = 0;
    let mut tool_calls = 0;
    let mut unparseable = 0;

    let result = loop {
        if session.finished() {
            break Ok(());
        }
        if steps >= opts.budget {
            break Err(DriverError::StepBudgetExhausted { budget: opts.budget });
        }
        steps += 1;
        let context = match session.engine().current_stage() {
            Some(view) => view.render(),
            None => "workflow finished".into(),
        };
        let body = json!({
            "model": endpoint.model,
            "messages": convo.messages(&context),
            "tools": tools,
            "tool_choice": "auto",
        });
        let mut request = agent.post(endpoint.url());
        if let Some(key) = &endpoint.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = match request.send_json(&body) {
            Ok(r) => r,
            Err(e) => {
                break Err(DriverError::EndpointUnreachable {
                    url: endpoint.url(),
                    reason: e.to_string(),
                })
            }
        };
        let status = response.status();
        if !status.is_success() {
            let text = response.body_mut().read_to_string().unwrap_or_default();
            break Err(DriverError::EndpointProtocol(format!("HTTP {status}: {}", truncate(text))));
        }
        let reply: Value = match response.body_mut().read_json() {
            Ok(v) => v,
            Err(e) => break Err(DriverError::EndpointProtocol(format!("response is not JSON: {e}"))),
        };
        let (message, call) = match parse_reply(&reply) {
            Ok(parsed) => parsed,
            Err(e) => break Err(e),
        };
        match call {
            Ok(call) => {
                tool_calls += 1;
                let stage = session.current_stage_name();
                let req = ToolRequest {
                    id: format!("step-{steps}"),
                    tool: call.tool.clone(),
                    args: call.args,
                };
                let resp = session.handle(&req);
                if let Some(w) = writer.as_mut() {
                    let mut step = TraceStep::new(req);
                    step.stage = stage;
                    step.response = Some(resp.clone());
                    if let Err(e) = w.record(&step) {
                        break Err(DriverError::Trace(e));
                    }
                }
                let assistant = json!({
                    "role": "assistant",
                    "content": message.get("content").cloned().unwrap_or(Value::Null),
                    "tool_calls": [message["tool_calls"][0].clone()],
                });
                let tool_msg = json!({
                    "role": "tool",
                    "tool_call_id": call.call_id,
                    "content": feedback(&resp),
                });
                convo.push(vec![assistant, tool_msg]);
            }
            Err(reason) => {
                unparseable += 1;
                let assistant = json!({
                    "role": "assistant",
                    "content": message.get("content").cloned().unwrap_or(Value::String(String::new())),
                });
                let note = json!({
                    "role": "user",
                    "content": format!("unparseable tool call: {reason}. Reply with exactly one tool call."),
                });
                convo.push(vec![assistant, note]);
            }
        }
    };
    session.persist()?;
    result?;
    Ok(RunOutcome {
        steps,
        tool_calls,
        unparseable,
        finished: session.finished(),
        state: session.state().clone(),
    })
}
