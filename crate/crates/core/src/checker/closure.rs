use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CheckContext, CheckResult, Checker, Message};
use crate::artifacts::{BugDocument, SpecDocument, TestReport, TestStatus};
use crate::label::QualifiedCheck;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestReportClosureParams {
    pub spec: String,
    pub report: String,
    /// A missing bug document is treated as empty.
    pub bugs: String,
}

/// Counts behind a closure verdict.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosureSummary {
    pub total: usize,
    pub exercised: usize,
    pub unknown_marks: Vec<QualifiedCheck>,
    pub unexercised: Vec<QualifiedCheck>,
    pub untraced_failures: Vec<QualifiedCheck>,
}

impl ClosureSummary {
    pub fn compute(spec: &BTreeSet<QualifiedCheck>, report: &TestReport, bugs: &BugDocument) -> Self {
        let marked: BTreeSet<&QualifiedCheck> = report.cases.iter().flat_map(|c| &c.marks).collect();
        let exercised: BTreeSet<&QualifiedCheck> = report
            .cases
            .iter()
            .filter(|c| c.status != TestStatus::Skip)
            .flat_map(|c| &c.marks)
            .collect();
        let failing: BTreeSet<&QualifiedCheck> = report
            .cases
            .iter()
            .filter(|c| c.status == TestStatus::Fail)
            .flat_map(|c| &c.marks)
            .collect();
        ClosureSummary {
            total: spec.len(),
            exercised: spec.iter().filter(|p| exercised.contains(p)).count(),
            unknown_marks: marked.iter().filter(|p| !spec.contains(p)).map(|p| (*p).clone()).collect(),
            unexercised: spec.iter().filter(|p| !exercised.contains(p)).cloned().collect(),
            untraced_failures: failing
                .iter()
                .filter(|p| !bugs.paths.contains(p))
                .map(|p| (*p).clone())
                .collect(),
        }
    }

    pub fn closed(&self) -> bool {
        self.unknown_marks.is_empty() && self.unexercised.is_empty() && self.untraced_failures.is_empty()
    }
}

fn cases_marking<'a>(
    report: &'a TestReport,
    path: &QualifiedCheck,
    status: Option<TestStatus>,
) -> Vec<&'a str> {
    report
        .cases
        .iter()
        .filter(|c| status.is_none_or(|s| c.status == s) && c.marks.contains(path))
        .map(|c| c.name.as_str())
        .collect()
}

/// Enforces test closure against the specification:
/// every marked check point is defined in the specification; every defined
/// check point is marked by at least one non-skipped case; every check point
/// marked by a failing case is cited in the bug document.
pub fn check_test_report_closure(spec: &SpecDocument, report: &TestReport, bugs: &BugDocument) -> CheckResult {
    let spec_paths = spec.paths();
    let summary = ClosureSummary::compute(&spec_paths, report, bugs);
    let spec_file = spec.source.display().to_string();
    let bug_file = bugs.source.display().to_string();
    let mut messages = Vec::new();

    for path in &summary.unknown_marks {
        messages.push(Message::error(format!(
            "unknown check point: {path} is marked by [{}] but not defined in the specification",
            cases_marking(report, path, None).join(", ")
        )));
    }
    for path in &summary.unexercised {
        messages.push(
            Message::error(format!("unexercised check point: {path} is not marked by any executed test"))
                .at(&spec_file, None),
        );
    }
    for path in &summary.untraced_failures {
        messages.push(
            Message::error(format!(
                "untraced failure: {path} (failing tests: [{}]) is not logged in the bug document",
                cases_marking(report, path, Some(TestStatus::Fail)).join(", ")
            ))
            .at(&bug_file, None),
        );
    }

    for case in report.cases.iter().filter(|c| c.marks.is_empty()) {
        messages.push(Message::warning(format!("test {} marks no check points", case.name)));
    }
    let failing: BTreeSet<&QualifiedCheck> = report
        .cases
        .iter()
        .filter(|c| c.status == TestStatus::Fail)
        .flat_map(|c| &c.marks)
        .collect();
    for path in bugs.paths.iter().filter(|p| !failing.contains(p)) {
        messages.push(
            Message::warning(format!("bug document cites {path}, which no failing test marks"))
                .at(&bug_file, None),
        );
    }
    CheckResult::from_messages(messages)
}

impl Checker for TestReportClosureParams {
    fn check(&self, ctx: &CheckContext<'_>) -> CheckResult {
        let mut errors = Vec::new();
        let spec = match std::fs::read_to_string(ctx.resolve(&self.spec)) {
            Ok(text) => Some(SpecDocument::from_text(&self.spec, text)),
            Err(err) => {
                errors.push(Message::error(format!("cannot read specification {}: {err}", self.spec)).at(&self.spec, None));
                None
            }
        };
        let report = match std::fs::read_to_string(ctx.resolve(&self.report)) {
            Ok(text) => match TestReport::from_json(Path::new(&self.report), &text) {
                Ok(report) => Some(report),
                Err(err) => {
                    errors.push(Message::error(err.to_string()).at(&self.report, None));
                    None
                }
            },
            Err(err) => {
                errors.push(Message::error(format!("cannot read test report {}: {err}", self.report)).at(&self.report, None));
                None
            }
        };
        let bugs = match std::fs::read_to_string(ctx.resolve(&self.bugs)) {
            Ok(text) => BugDocument::from_text(&self.bugs, &text),
            Err(_) => BugDocument::from_text(&self.bugs, ""),
        };
        match (spec, report) {
            (Some(spec), Some(report)) => check_test_report_closure(&spec, &report, &bugs),
            _ => CheckResult::from_messages(errors),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifacts::TestCase;

    const SPEC: &str = "<FG-ARITHMETIC><FC-VFADD><CK-FP32><CK-FP16><CK-BF16>";

    fn case(name: &str, status: TestStatus, marks: &[&str]) -> TestCase {
        TestCase {
            name: name.into(),
            status,
            marks: marks.iter().map(|m| m.parse().unwrap()).collect(),
            duration_s: 0.0,
        }
    }

    fn report(cases: Vec<TestCase>) -> TestReport {
        TestReport { cases }
    }

    const FP32: &str = "FG-ARITHMETIC/FC-VFADD/CK-FP32";
    const FP16: &str = "FG-ARITHMETIC/FC-VFADD/CK-FP16";
    const BF16: &str = "FG-ARITHMETIC/FC-VFADD/CK-BF16";

    #[test]
    fn all_marked_all_passing() {
        let spec = SpecDocument::from_text("spec.md", SPEC);
        let r = report(vec![
            case("t32", TestStatus::Pass, &[FP32]),
            case("t16", TestStatus::Pass, &[FP16, BF16]),
        ]);
        let result = check_test_report_closure(&spec, &r, &BugDocument::from_text("bugs.md", ""));
        assert!(result.passed(), "{:?}", result.messages());
        assert!(result.messages().is_empty());
    }

    #[test]
    fn failing_case_must_be_logged() {
        let spec = SpecDocument::from_text("spec.md", SPEC);
        let r = report(vec![
            case("t32", TestStatus::Pass, &[FP32, FP16]),
            case("tbf16", TestStatus::Fail, &[BF16]),
        ]);
        let result = check_test_report_closure(&spec, &r, &BugDocument::from_text("bugs.md", "nothing"));
        assert!(!result.passed());
        let err = result.errors().next().unwrap();
        assert!(err.text.starts_with("untraced failure: FG-ARITHMETIC/FC-VFADD/CK-BF16"));
        assert!(err.text.contains("tbf16"));

        let logged = BugDocument::from_text("bugs.md", "BF16 special values: FG-ARITHMETIC/FC-VFADD/CK-BF16");
        assert!(check_test_report_closure(&spec, &r, &logged).passed());
    }

    #[test]
    fn unknown_mark_fails() {
        let spec = SpecDocument::from_text("spec.md", SPEC);
        let r = report(vec![case("t", TestStatus::Pass, &[FP32, FP16, BF16, "FG-ARITHMETIC/FC-VFSUB/CK-FP32"])]);
        let result = check_test_report_closure(&spec, &r, &BugDocument::default());
        assert_eq!(result.errors().count(), 1);
        assert!(result.messages()[0].text.contains("FC-VFSUB"));
    }

    #[test]
    fn skipped_tests_do_not_exercise() {
        let spec = SpecDocument::from_text("spec.md", SPEC);
        let r = report(vec![
            case("t", TestStatus::Pass, &[FP32, FP16]),
            case("s", TestStatus::Skip, &[BF16]),
            case("empty", TestStatus::Pass, &[]),
        ]);
        let result = check_test_report_closure(&spec, &r, &BugDocument::default());
        assert_eq!(result.errors().count(), 1);
        assert!(result.messages()[0].text.contains("unexercised check point: FG-ARITHMETIC/FC-VFADD/CK-BF16"));
        assert_eq!(result.warnings().count(), 1);
    }

    #[test]
    fn stray_bug_entries_warn() {
        let spec = SpecDocument::from_text("spec.md", SPEC);
        let r = report(vec![case("t", TestStatus::Pass, &[FP32, FP16, BF16])]);
        let bugs = BugDocument::from_text("bugs.md", FP16);
        let result = check_test_report_closure(&spec, &r, &bugs);
        assert!(result.passed());
        assert_eq!(result.warnings().count(), 1);
    }

    #[test]
    fn summary_counts() {
        let spec = SpecDocument::from_text("spec.md", SPEC).paths();
        let r = report(vec![case("f", TestStatus::Fail, &[FP32]), case("s", TestStatus::Skip, &[FP16])]);
        let s = ClosureSummary::compute(&spec, &r, &BugDocument::default());
        assert_eq!(s.total, 3);
        assert_eq!(s.exercised, 1);
        assert_eq!(s.unexercised.len(), 2);
        assert_eq!(s.untraced_failures.len(), 1);
        assert!(!s.closed());
    }
}
