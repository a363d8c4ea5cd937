use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const TOOL_NAMES: [&str; 7] = [
    "GetCurrentTips",
    "Check",
    "Complete",
    "Status",
    "RunTest",
    "ReadArtifact",
    "WriteArtifact",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolRequest {
    pub id: String,
    pub tool: String,
    #[serde(default)]
    pub args: Map<String, Value>,
}

impl ToolRequest {
    pub fn new(id: impl Into<String>, tool: impl Into<String>, args: Value) -> Self {
        let args = match args {
            Value::Object(map) => map,
            Value::Null => Map::new(),
            other => panic!("tool arguments must be an object, got {other}"),
        };
        ToolRequest {
            id: id.into(),
            tool: tool.into(),
            args,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolResponse {
    pub id: String,
    pub status: ResponseStatus,
    #[serde(default)]
    pub content: Value,
    #[serde(default)]
    pub message: String,
}

/// Machine-readable kind carried in `content.error` of error responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorKind {
    PathEscape,
    NotAllowlisted,
    UnknownTool,
    InvalidArgs,
    DuplicateId,
    MalformedRequest,
    AlreadyFinished,
    Io,
    Report,
    Internal,
}

impl ToolResponse {
    pub fn ok(id: impl Into<String>, content: Value, message: impl Into<String>) -> Self {
        ToolResponse {
            id: id.into(),
            status: ResponseStatus::Ok,
            content,
            message: message.into(),
        }
    }

    pub fn error(id: impl Into<String>, kind: ErrorKind, message: impl Into<String>) -> Self {
        ToolResponse {
            id: id.into(),
            status: ResponseStatus::Error,
            content: serde_json::json!({ "error": kind }),
            message: message.into(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ResponseStatus::Ok
    }

    pub fn error_kind(&self) -> Option<ErrorKind> {
        serde_json::from_value(self.content.get("error")?.clone()).ok()
    }

    /// `content.passed`, present on Check and Complete responses.
    pub fn passed(&self) -> Option<bool> {
        self.content.get("passed")?.as_bool()
    }

    /// `content.advanced`, present on Complete responses.
    pub fn advanced(&self) -> Option<bool> {
        self.content.get("advanced")?.as_bool()
    }
}
