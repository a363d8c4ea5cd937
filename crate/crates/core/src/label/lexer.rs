use serde::Serialize;

use super::{Label, Level, Name};

/// A label together with the byte offset of its opening `<`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocatedLabel {
    pub label: Label,
    pub offset: usize,
}

/// A label-like token that does not satisfy the grammar, e.g. `<fg-alu>` or
/// `<FC->`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LexWarning {
    pub offset: usize,
    pub token: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LexOutput {
    pub labels: Vec<LocatedLabel>,
    pub warnings: Vec<LexWarning>,
}

/// Scans `text` for `<FG-NAME>`, `<FC-NAME>` and `<CK-NAME>` tokens.
///
/// A candidate token is `<`, a two-letter level prefix in any letter case,
/// `-`, a run of characters without whitespace or angle brackets, and `>`.
/// Candidates that fail the grammar become warnings; `<CK-*>`-style
/// wildcards are prose shorthand and produce neither.
pub fn lex_labels(text: &str) -> LexOutput {
    let bytes = text.as_bytes();
    let mut out = LexOutput::default();
    let mut pos = 0;
    while let Some(found) = text[pos..].find('<') {
        let start = pos + found;
        match candidate_at(text, start) {
            Some(end) => {
                classify(&text[start..end], start, &mut out);
                pos = end;
            }
            None => pos = start + 1,
        }
        if pos >= bytes.len() {
            break;
        }
    }
    out
}

/// Returns the end offset (exclusive) of a candidate token starting at `start`.
fn candidate_at(text: &str, start: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let head = bytes.get(start + 1..start + 4)?;
    let prefix = [head[0].to_ascii_uppercase(), head[1].to_ascii_uppercase()];
    if !matches!(&prefix, b"FG" | b"FC" | b"CK") || head[2] != b'-' {
        return None;
    }
    let body_start = start + 4;
    for (i, c) in text[body_start..].char_indices() {
        match c {
            '>' => return Some(body_start + i + 1),
            '<' => return None,
            c if c.is_whitespace() => return None,
            _ => {}
        }
    }
    None
}

fn classify(token: &str, offset: usize, out: &mut LexOutput) {
    let prefix = &token[1..3];
    let body = &token[4..token.len() - 1];
    if body == "*" {
        return;
    }
    let warn = |reason: String| LexWarning {
        offset,
        token: token.to_string(),
        reason,
    };
    let Some(level) = Level::from_prefix(prefix) else {
        out.warnings.push(warn(format!(
            "level prefix `{prefix}` must be uppercase FG, FC or CK"
        )));
        return;
    };
    match Name::new(body) {
        Ok(name) => out.labels.push(LocatedLabel {
            label: Label { level, name },
            offset,
        }),
        Err(err) => out.warnings.push(warn(err.to_string())),
    }
}
