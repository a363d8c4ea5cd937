use serde::Deserialize;

use super::{CheckContext, CheckResult, Checker, Message};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileExistsParams {
    pub paths: Vec<String>,
    /// Also reject empty files.
    #[serde(default)]
    pub non_empty: bool,
}

pub fn check_file_exists(params: &FileExistsParams, ctx: &CheckContext<'_>) -> CheckResult {
    let mut messages = Vec::new();
    for rel in &params.paths {
        match std::fs::metadata(ctx.resolve(rel)) {
            Ok(meta) if !meta.is_file() => {
                messages.push(Message::error(format!("{rel} is not a regular file")).at(rel, None))
            }
            Ok(meta) if params.non_empty && meta.len() == 0 => {
                messages.push(Message::error(format!("{rel} is empty")).at(rel, None))
            }
            Ok(_) => {}
            Err(_) => messages.push(Message::error(format!("missing output file {rel}")).at(rel, None)),
        }
    }
    CheckResult::from_messages(messages)
}

impl Checker for FileExistsParams {
    fn check(&self, ctx: &CheckContext<'_>) -> CheckResult {
        check_file_exists(self, ctx)
    }
}
