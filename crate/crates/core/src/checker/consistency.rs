use serde::Deserialize;

use super::{CheckContext, CheckResult, Checker, Message};
use crate::artifacts::{CoverageModel, SpecDocument};
use crate::label::diff_bidirectional;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageConsistencyParams {
    pub spec: String,
    pub coverage: Vec<String>,
}

/// Compares coverage model labels against the specification in both
/// directions. Lexer warnings in coverage sources stay warnings.
pub fn check_coverage_consistency(spec: &SpecDocument, cov: &CoverageModel) -> CheckResult {
    let diff = diff_bidirectional(&spec.paths(), &cov.paths);
    let spec_file = spec.source.display().to_string();
    let mut messages = Vec::new();
    for path in &diff.missing {
        messages.push(Message::error(format!("omission: {path}")).at(&spec_file, None));
    }
    for path in &diff.extra {
        messages.push(Message::error(format!("hallucination or naming mistake: {path}")));
    }
    for u in &cov.unresolved {
        let file = u.source.display();
        messages.push(
            Message::error(format!(
                "unresolved label {} in {file} at offset {}: no enclosing function group/checkpoint",
                u.unresolved.label, u.unresolved.offset
            ))
            .at(&file, Some(u.unresolved.offset)),
        );
    }
    for w in &cov.warnings {
        let file = w.source.display();
        messages.push(
            Message::warning(format!(
                "label-like token `{}` in {file} at offset {} ignored: {}",
                w.warning.token, w.warning.offset, w.warning.reason
            ))
            .at(&file, Some(w.warning.offset)),
        );
    }
    CheckResult::from_messages(messages)
}

impl Checker for CoverageConsistencyParams {
    fn check(&self, ctx: &CheckContext<'_>) -> CheckResult {
        let mut read_errors = Vec::new();
        let spec = match std::fs::read_to_string(ctx.resolve(&self.spec)) {
            Ok(text) => Some(SpecDocument::from_text(&self.spec, text)),
            Err(err) => {
                read_errors.push(
                    Message::error(format!("cannot read specification {}: {err}", self.spec))
                        .at(&self.spec, None),
                );
                None
            }
        };
        let mut cov = CoverageModel::default();
        for rel in &self.coverage {
            match std::fs::read_to_string(ctx.resolve(rel)) {
                Ok(text) => cov.add_source(rel, &text),
                Err(err) => read_errors.push(
                    Message::error(format!("cannot read coverage source {rel}: {err}")).at(rel, None),
                ),
            }
        }
        match spec {
            Some(spec) if read_errors.is_empty() => check_coverage_consistency(&spec, &cov),
            _ => CheckResult::from_messages(read_errors),
        }
    }
}
