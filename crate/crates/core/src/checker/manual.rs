use serde::Deserialize;

use super::{CheckContext, CheckResult, Checker, Message};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualGateParams {
    /// Workspace-relative approval token.
    pub token_file: String,
    #[serde(default)]
    pub prompt: Option<String>,
}

/// The token must consist of the single line `approved`; the trailing
/// newline is optional.
fn token_approves(content: &str) -> bool {
    let content = content
        .strip_suffix("\r\n")
        .or_else(|| content.strip_suffix('\n'))
        .unwrap_or(content);
    content == "approved"
}

/// Pauses the workflow until a human approves. Interactive sessions ask the
/// approver; otherwise the approval token decides.
pub fn check_manual_gate(params: &ManualGateParams, ctx: &CheckContext<'_>) -> CheckResult {
    let rel = params.token_file.as_str();
    if ctx.interactive {
        if let Some(approver) = ctx.approver {
            let prompt = params
                .prompt
                .clone()
                .unwrap_or_else(|| format!("Review the outputs of stage `{}`. Approve?", ctx.stage));
            return if approver.approve(ctx.stage, &prompt) {
                CheckResult::pass()
            } else {
                CheckResult::fail(format!("stage {} was not approved by the reviewer", ctx.stage))
            };
        }
    }
    match std::fs::read_to_string(ctx.resolve(rel)) {
        Ok(content) if token_approves(&content) => CheckResult::pass(),
        Ok(_) => CheckResult::from_messages(vec![Message::error(format!(
            "token not approved: {rel} must contain the single line `approved`"
        ))
        .at(rel, None)]),
        Err(_) => CheckResult::from_messages(vec![Message::error(format!(
            "awaiting human review of stage {}: a reviewer must create {rel} containing the line `approved`",
            ctx.stage
        ))
        .at(rel, None)]),
    }
}

impl Checker for ManualGateParams {
    fn check(&self, ctx: &CheckContext<'_>) -> CheckResult {
        check_manual_gate(self, ctx)
    }
}
