use serde::Deserialize;

use super::{CheckContext, CheckResult, Checker, Message};
use crate::artifacts::SpecDocument;

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSyntaxParams {
    /// Workspace-relative path of the annotated specification analysis.
    pub spec: String,
    #[serde(default = "one")]
    pub min_groups: usize,
}

/// Validates naming and hierarchical completeness of a specification
/// document. Lexer near-misses are escalated to errors here.
pub fn check_label_syntax(doc: &SpecDocument, params: &LabelSyntaxParams) -> CheckResult {
    let file = doc.source.display().to_string();
    let mut messages = Vec::new();

    let groups = doc.tree.groups.len();
    if groups < params.min_groups {
        let text = if params.min_groups == 1 {
            "at least one function group required".to_string()
        } else {
            format!("at least {} function groups required, found {groups}", params.min_groups)
        };
        messages.push(Message::error(text).at(&file, None));
    }
    for group in &doc.tree.groups {
        if group.features.is_empty() {
            messages.push(
                Message::error(format!(
                    "function group FG-{} has no function checkpoints (FC)",
                    group.name
                ))
                .at(&file, Some(group.offset)),
            );
        }
        for feature in &group.features {
            if feature.checks.is_empty() {
                messages.push(
                    Message::error(format!(
                        "function checkpoint FG-{}/FC-{} has no check points (CK)",
                        group.name, feature.name
                    ))
                    .at(&file, Some(feature.offset)),
                );
            }
        }
    }
    for issue in &doc.issues {
        messages.push(Message::error(issue.to_string()).at(&file, Some(issue.offset())));
    }
    for warning in &doc.warnings {
        messages.push(
            Message::error(format!(
                "malformed label `{}` at offset {}: {}",
                warning.token, warning.offset, warning.reason
            ))
            .at(&file, Some(warning.offset)),
        );
    }
    CheckResult::from_messages(messages)
}

impl Checker for LabelSyntaxParams {
    fn check(&self, ctx: &CheckContext<'_>) -> CheckResult {
        match std::fs::read_to_string(ctx.resolve(&self.spec)) {
            Ok(text) => check_label_syntax(&SpecDocument::from_text(&self.spec, text), self),
            Err(err) => CheckResult::from_messages(vec![Message::error(format!(
                "cannot read specification {}: {err}",
                self.spec
            ))
            .at(&self.spec, None)]),
        }
    }
}
