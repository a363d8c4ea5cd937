//! Tool-call protocol through which an external agent drives a workflow.
//!
//! Requests and responses are single-line JSON objects. Checker verdicts
//! always travel in `ok` responses; `error` responses are reserved for
//! protocol and environment faults such as sandbox violations.

mod driver;
mod protocol;
mod sandbox;
mod session;
mod trace;

pub use driver::{
    llm_driver, tool_schemas, DriverError, DriverOptions, EndpointConfig, RunOutcome, DEFAULT_STEP_BUDGET,
    ENV_API_BASE, ENV_API_KEY, ENV_MODEL,
};
pub use protocol::{ErrorKind, ResponseStatus, ToolRequest, ToolResponse, TOOL_NAMES};
pub use sandbox::{Sandbox, SandboxError, STATE_DIR};
pub use session::Session;
pub use trace::{
    parse_trace, read_trace, render_trace, replay, serve, Expect, ReplayError, ReplayOptions, ReplayOutcome,
    TraceError, TraceStep, TraceWriter,
};
