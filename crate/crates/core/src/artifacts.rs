//! Parsers for the label-bearing artifacts a workflow produces: the
//! annotated specification analysis, coverage model sources, structured test
//! reports and the bug analysis document.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::{
    build_tree_lenient, flatten, is_name_char, is_name_start, lex_labels, resolve_paths,
    HierarchyIssue, LabelTree, LexWarning, Name, QualifiedCheck, Unresolved,
};

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("cannot read {}: {source}", .path.display())]
    FileUnreadable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: schema violation at `{field}`: {reason}", .path.display())]
    SchemaViolation {
        path: PathBuf,
        field: String,
        reason: String,
    },
}

fn read_text(path: &Path) -> Result<String, ArtifactError> {
    let bytes = fs::read(path).map_err(|source| ArtifactError::FileUnreadable {
        path: path.to_path_buf(),
        source,
    })?;
    String::from_utf8(bytes).map_err(|e| ArtifactError::FileUnreadable {
        path: path.to_path_buf(),
        source: io::Error::new(io::ErrorKind::InvalidData, e),
    })
}

/// An annotated specification analysis document.
#[derive(Debug, Clone)]
pub struct SpecDocument {
    pub source: PathBuf,
    pub text: String,
    pub tree: LabelTree,
    pub warnings: Vec<LexWarning>,
    pub issues: Vec<HierarchyIssue>,
}

impl SpecDocument {
    pub fn from_text(source: impl Into<PathBuf>, text: impl Into<String>) -> Self {
        let text = text.into();
        let lexed = lex_labels(&text);
        let (tree, issues) = build_tree_lenient(&lexed.labels);
        SpecDocument {
            source: source.into(),
            text,
            tree,
            warnings: lexed.warnings,
            issues,
        }
    }

    pub fn paths(&self) -> BTreeSet<QualifiedCheck> {
        flatten(&self.tree)
    }
}

pub fn parse_spec_document(path: &Path) -> Result<SpecDocument, ArtifactError> {
    Ok(SpecDocument::from_text(path, read_text(path)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceUnresolved {
    pub source: PathBuf,
    #[serde(flatten)]
    pub unresolved: Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceWarning {
    pub source: PathBuf,
    #[serde(flatten)]
    pub warning: LexWarning,
}

/// Label paths extracted from coverage model sources.
///
/// Sources are scanned as plain text; only label tokens matter. Each file
/// starts with an empty FG/FC context.
#[derive(Debug, Clone, Default)]
pub struct CoverageModel {
    pub sources: Vec<PathBuf>,
    pub paths: BTreeSet<QualifiedCheck>,
    pub unresolved: Vec<SourceUnresolved>,
    pub warnings: Vec<SourceWarning>,
}

impl CoverageModel {
    pub fn add_source(&mut self, source: impl Into<PathBuf>, text: &str) {
        let source = source.into();
        let lexed = lex_labels(text);
        let (paths, unresolved) = resolve_paths(&lexed.labels);
        self.paths.extend(paths);
        self.unresolved.extend(unresolved.into_iter().map(|unresolved| SourceUnresolved {
            source: source.clone(),
            unresolved,
        }));
        self.warnings.extend(lexed.warnings.into_iter().map(|warning| SourceWarning {
            source: source.clone(),
            warning,
        }));
        self.sources.push(source);
    }
}

pub fn parse_coverage_model(paths: &[PathBuf]) -> Result<CoverageModel, ArtifactError> {
    let mut model = CoverageModel::default();
    for path in paths {
        let text = read_text(path)?;
        model.add_source(path, &text);
    }
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestStatus {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub name: String,
    pub status: TestStatus,
    pub marks: BTreeSet<QualifiedCheck>,
    pub duration_s: f64,
}

/// One run of a test runner: `{"cases": [{name, status, marks, duration_s}]}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub cases: Vec<TestCase>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
}

impl TestReport {
    pub fn summary(&self) -> ReportSummary {
        let count = |s| self.cases.iter().filter(|c| c.status == s).count();
        ReportSummary {
            total: self.cases.len(),
            passed: count(TestStatus::Pass),
            failed: count(TestStatus::Fail),
            skipped: count(TestStatus::Skip),
        }
    }

    /// Parses and validates report JSON. `source` only labels errors.
    pub fn from_json(source: &Path, text: &str) -> Result<Self, ArtifactError> {
        let violation = |field: String, reason: String| ArtifactError::SchemaViolation {
            path: source.to_path_buf(),
            field,
            reason,
        };
        let mut de = serde_json::Deserializer::from_str(text);
        let report: TestReport = serde_path_to_error::deserialize(&mut de).map_err(|err| {
            let field = err.path().to_string();
            violation(field, err.into_inner().to_string())
        })?;
        de.end()
            .map_err(|e| violation(".".to_string(), e.to_string()))?;

        let mut seen = HashSet::new();
        for (i, case) in report.cases.iter().enumerate() {
            if !case.duration_s.is_finite() || case.duration_s < 0.0 {
                return Err(violation(
                    format!("cases[{i}].duration_s"),
                    format!("must be a non-negative number, got {}", case.duration_s),
                ));
            }
            if !seen.insert(case.name.as_str()) {
                return Err(violation(
                    format!("cases[{i}].name"),
                    format!("duplicate case name `{}`", case.name),
                ));
            }
        }
        Ok(report)
    }
}

pub fn parse_test_report(path: &Path) -> Result<TestReport, ArtifactError> {
    TestReport::from_json(path, &read_text(path)?)
}

/// Check points cited by the bug analysis document.
#[derive(Debug, Clone, Default)]
pub struct BugDocument {
    pub source: PathBuf,
    pub paths: BTreeSet<QualifiedCheck>,
    pub unresolved: Vec<Unresolved>,
}

impl BugDocument {
    /// Accepts both `<FG-x><FC-y><CK-z>` label triples and `FG-x/FC-y/CK-z`
    /// path strings; the result is their union.
    pub fn from_text(source: impl Into<PathBuf>, text: &str) -> Self {
        let lexed = lex_labels(text);
        let (mut paths, unresolved) = resolve_paths(&lexed.labels);
        paths.extend(scan_path_strings(text));
        BugDocument {
            source: source.into(),
            paths,
            unresolved,
        }
    }
}

pub fn parse_bug_document(path: &Path) -> Result<BugDocument, ArtifactError> {
    Ok(BugDocument::from_text(path, &read_text(path)?))
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'-'
}

/// Finds every `FG-x/FC-y/CK-z` path written out in plain text.
pub fn scan_path_strings(text: &str) -> BTreeSet<QualifiedCheck> {
    let bytes = text.as_bytes();
    let mut found = BTreeSet::new();
    let mut pos = 0;
    while let Some(hit) = text[pos..].find("FG-") {
        let start = pos + hit;
        pos = start + 1;
        if start > 0 && is_word_byte(bytes[start - 1]) {
            continue;
        }
        let mut cursor = start;
        let segment = |prefix: &[u8], cursor: &mut usize| -> Option<Name> {
            if !bytes[*cursor..].starts_with(prefix) {
                return None;
            }
            let name_start = *cursor + prefix.len();
            let mut end = name_start;
            while end < bytes.len() && is_name_char(bytes[end]) {
                end += 1;
            }
            if end == name_start || !is_name_start(bytes[name_start]) {
                return None;
            }
            *cursor = end;
            Name::new(&text[name_start..end]).ok()
        };
        let Some(group) = segment(b"FG-", &mut cursor) else { continue };
        let Some(feature) = segment(b"/FC-", &mut cursor) else { continue };
        let Some(check) = segment(b"/CK-", &mut cursor) else { continue };
        found.insert(QualifiedCheck {
            group,
            feature,
            check,
        });
        pos = cursor;
    }
    found
}
