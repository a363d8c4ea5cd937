//! Stage checkers.
//!
//! A checker inspects workspace artifacts and returns a [`CheckResult`]
//! whose messages are fed back to the agent verbatim. Checkers report every
//! violation they find; they never stop at the first one.
//!
//! Built-in kinds are `file_exists`, `label_syntax`, `coverage_consistency`,
//! `test_report_closure`, `command` and `manual_gate`. Additional kinds can
//! be added to a [`CheckerRegistry`] by implementing [`Checker`].

mod closure;
mod command;
mod consistency;
mod files;
mod manual;
mod syntax;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use closure::{check_test_report_closure, ClosureSummary};
pub use command::{check_command, run_command, CommandOutcome, CommandParams, DEFAULT_TAIL_BYTES};
pub use consistency::check_coverage_consistency;
pub use files::{check_file_exists, FileExistsParams};
pub use manual::{check_manual_gate, ManualGateParams};
pub use syntax::{check_label_syntax, LabelSyntaxParams};

pub use closure::TestReportClosureParams;
pub use consistency::CoverageConsistencyParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// Where a message points: a workspace file and, optionally, a byte offset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Locus {
    pub file: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub offset: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub severity: Severity,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub locus: Option<Locus>,
}

impl Message {
    pub fn error(text: impl Into<String>) -> Self {
        Message {
            severity: Severity::Error,
            text: text.into(),
            locus: None,
        }
    }

    pub fn warning(text: impl Into<String>) -> Self {
        Message {
            severity: Severity::Warning,
            text: text.into(),
            locus: None,
        }
    }

    pub fn at(mut self, file: impl fmt::Display, offset: Option<usize>) -> Self {
        self.locus = Some(Locus {
            file: file.to_string(),
            offset,
        });
        self
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.text)?;
        if let Some(locus) = &self.locus {
            match locus.offset {
                Some(offset) => write!(f, " [{}@{}]", locus.file, offset)?,
                None => write!(f, " [{}]", locus.file)?,
            }
        }
        Ok(())
    }
}

/// Verdict plus ordered feedback. `passed` holds iff no message is an error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    passed: bool,
    messages: Vec<Message>,
}

impl CheckResult {
    pub fn from_messages(messages: Vec<Message>) -> Self {
        let passed = messages.iter().all(|m| m.severity != Severity::Error);
        CheckResult { passed, messages }
    }

    pub fn pass() -> Self {
        CheckResult::from_messages(Vec::new())
    }

    pub fn fail(text: impl Into<String>) -> Self {
        CheckResult::from_messages(vec![Message::error(text)])
    }

    /// Concatenates results in order.
    pub fn merge(results: impl IntoIterator<Item = CheckResult>) -> Self {
        CheckResult::from_messages(results.into_iter().flat_map(|r| r.messages).collect())
    }

    pub fn passed(&self) -> bool {
        self.passed
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn errors(&self) -> impl Iterator<Item = &Message> {
        self.messages.iter().filter(|m| m.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Message> {
        self.messages.iter().filter(|m| m.severity == Severity::Warning)
    }
}

/// Interactive approval for `manual_gate` checkers.
pub trait Approver {
    fn approve(&self, stage: &str, prompt: &str) -> bool;
}

pub struct CheckContext<'a> {
    pub workspace: &'a Path,
    pub stage: &'a str,
    pub interactive: bool,
    pub approver: Option<&'a dyn Approver>,
}

impl<'a> CheckContext<'a> {
    pub fn new(workspace: &'a Path, stage: &'a str) -> Self {
        CheckContext {
            workspace,
            stage,
            interactive: false,
            approver: None,
        }
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.workspace.join(relative)
    }
}

/// The contract every checker implements.
pub trait Checker: Send + Sync {
    fn check(&self, ctx: &CheckContext<'_>) -> CheckResult;
}

/// A checker declaration as it appears in the workflow config: a `kind`
/// plus kind-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckerSpec {
    pub kind: String,
    #[serde(flatten)]
    pub params: Map<String, Value>,
}

impl CheckerSpec {
    pub fn new(kind: &str, params: Value) -> Self {
        let params = match params {
            Value::Object(map) => map,
            Value::Null => Map::new(),
            other => panic!("checker params must be an object, got {other}"),
        };
        CheckerSpec {
            kind: kind.to_string(),
            params,
        }
    }

    pub fn param_str(&self, key: &str) -> Option<&str> {
        self.params.get(key).and_then(Value::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckerError {
    #[error("unknown checker kind `{0}`")]
    UnknownKind(String),
    #[error("invalid params for checker `{kind}` at `{field}`: {reason}")]
    InvalidParams {
        kind: String,
        field: String,
        reason: String,
    },
}

type Factory = dyn Fn(&Map<String, Value>) -> Result<Box<dyn Checker>, ParamError> + Send + Sync;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamError {
    pub field: String,
    pub reason: String,
}

/// Deserializes checker params, rejecting unknown keys, and reports the
/// failing field path.
pub fn parse_params<T: DeserializeOwned>(params: &Map<String, Value>) -> Result<T, ParamError> {
    let value = Value::Object(params.clone());
    serde_path_to_error::deserialize(value).map_err(|err| ParamError {
        field: err.path().to_string(),
        reason: err.into_inner().to_string(),
    })
}

/// Maps checker kinds to constructors.
#[derive(Clone)]
pub struct CheckerRegistry {
    factories: BTreeMap<String, Arc<Factory>>,
}

impl fmt::Debug for CheckerRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CheckerRegistry")
            .field("kinds", &self.factories.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Default for CheckerRegistry {
    fn default() -> Self {
        let mut registry = CheckerRegistry::empty();
        registry.register_params::<FileExistsParams>("file_exists");
        registry.register_params::<LabelSyntaxParams>("label_syntax");
        registry.register_params::<CoverageConsistencyParams>("coverage_consistency");
        registry.register_params::<TestReportClosureParams>("test_report_closure");
        registry.register_params::<CommandParams>("command");
        registry.register_params::<ManualGateParams>("manual_gate");
        registry
    }
}

impl CheckerRegistry {
    pub fn empty() -> Self {
        CheckerRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn register<F>(&mut self, kind: &str, factory: F)
    where
        F: Fn(&Map<String, Value>) -> Result<Box<dyn Checker>, ParamError> + Send + Sync + 'static,
    {
        self.factories.insert(kind.to_string(), Arc::new(factory));
    }

    /// Registers a kind whose params type is itself the checker.
    pub fn register_params<T>(&mut self, kind: &str)
    where
        T: Checker + DeserializeOwned + 'static,
    {
        self.register(kind, |params| {
            parse_params::<T>(params).map(|c| Box::new(c) as Box<dyn Checker>)
        });
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, spec: &CheckerSpec) -> Result<Box<dyn Checker>, CheckerError> {
        let factory = self
            .factories
            .get(&spec.kind)
            .ok_or_else(|| CheckerError::UnknownKind(spec.kind.clone()))?;
        factory(&spec.params).map_err(|e| CheckerError::InvalidParams {
            kind: spec.kind.clone(),
            field: e.field,
            reason: e.reason,
        })
    }
}

/// Builds and runs one checker. Misconfiguration is an `Err`, distinct from
/// a failing verdict.
pub fn run_checker(
    registry: &CheckerRegistry,
    spec: &CheckerSpec,
    ctx: &CheckContext<'_>,
) -> Result<CheckResult, CheckerError> {
    Ok(registry.build(spec)?.check(ctx))
}
