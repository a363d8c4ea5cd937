use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use super::{Label, Level, LocatedLabel, Name, QualifiedCheck};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckEntry {
    pub name: Name,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feature {
    pub name: Name,
    pub offset: usize,
    pub checks: Vec<CheckEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionGroup {
    pub name: Name,
    pub offset: usize,
    pub features: Vec<Feature>,
}

/// The FG → FC → CK hierarchy, in document order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelTree {
    pub groups: Vec<FunctionGroup>,
}

impl LabelTree {
    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn check_count(&self) -> usize {
        self.groups
            .iter()
            .flat_map(|g| &g.features)
            .map(|f| f.checks.len())
            .sum()
    }

    /// Renders a minimal annotated markdown document whose labels rebuild
    /// this tree.
    pub fn render_document(&self) -> String {
        let mut doc = String::new();
        for group in &self.groups {
            doc.push_str(&format!("## <FG-{}>\n\n", group.name));
            for feature in &group.features {
                doc.push_str(&format!("### <FC-{}>\n\n", feature.name));
                for check in &feature.checks {
                    doc.push_str(&format!("- <CK-{}>\n", check.name));
                }
                doc.push('\n');
            }
        }
        doc
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HierarchyIssue {
    /// A CK before any FC, or an FC before any FG.
    Orphan {
        #[serde(serialize_with = "ser_display")]
        label: Label,
        offset: usize,
    },
    /// The same name appears twice under one parent.
    DuplicateSibling {
        #[serde(serialize_with = "ser_display")]
        label: Label,
        offset: usize,
        first_offset: usize,
        /// Qualified prefix of the shared parent, empty for top-level groups.
        parent: String,
    },
}

fn ser_display<S: serde::Serializer, T: fmt::Display>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

impl HierarchyIssue {
    pub fn offset(&self) -> usize {
        match self {
            HierarchyIssue::Orphan { offset, .. } | HierarchyIssue::DuplicateSibling { offset, .. } => {
                *offset
            }
        }
    }
}

impl fmt::Display for HierarchyIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HierarchyIssue::Orphan { label, offset } => {
                let parent = match label.level {
                    Level::Check => "function checkpoint (FC)",
                    _ => "function group (FG)",
                };
                write!(f, "orphan label {label} at offset {offset}: no preceding {parent}")
            }
            HierarchyIssue::DuplicateSibling {
                label,
                offset,
                first_offset,
                parent,
            } => {
                let scope = if parent.is_empty() { "top level" } else { parent.as_str() };
                write!(
                    f,
                    "duplicate label {label} at offset {offset} under {scope} (first defined at offset {first_offset})"
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{} hierarchy issue(s), first: {}", .issues.len(), .issues[0])]
pub struct HierarchyError {
    pub issues: Vec<HierarchyIssue>,
}

/// Builds the label hierarchy, failing with every issue found.
///
/// Attachment follows the nearest-preceding rule: an FC belongs to the last
/// FG before it and a CK to the last FC before it. Opening an FG closes the
/// current FC, so a CK directly after an FG is an orphan.
pub fn build_tree(labels: &[LocatedLabel]) -> Result<LabelTree, HierarchyError> {
    let (tree, issues) = build_tree_lenient(labels);
    if issues.is_empty() {
        Ok(tree)
    } else {
        Err(HierarchyError { issues })
    }
}

/// Like [`build_tree`], but always returns the best-effort tree alongside the
/// issues. Orphans are dropped; a repeated FG or FC reopens the earlier node.
pub fn build_tree_lenient(labels: &[LocatedLabel]) -> (LabelTree, Vec<HierarchyIssue>) {
    let mut tree = LabelTree::default();
    let mut issues = Vec::new();
    let mut group: Option<usize> = None;
    let mut feature: Option<usize> = None;

    for LocatedLabel { label, offset } in labels {
        let offset = *offset;
        match label.level {
            Level::Group => {
                feature = None;
                if let Some(i) = tree.groups.iter().position(|g| g.name == label.name) {
                    issues.push(HierarchyIssue::DuplicateSibling {
                        label: label.clone(),
                        offset,
                        first_offset: tree.groups[i].offset,
                        parent: String::new(),
                    });
                    group = Some(i);
                } else {
                    tree.groups.push(FunctionGroup {
                        name: label.name.clone(),
                        offset,
                        features: Vec::new(),
                    });
                    group = Some(tree.groups.len() - 1);
                }
            }
            Level::Feature => {
                let Some(g) = group else {
                    issues.push(HierarchyIssue::Orphan {
                        label: label.clone(),
                        offset,
                    });
                    feature = None;
                    continue;
                };
                let parent = &mut tree.groups[g];
                if let Some(i) = parent.features.iter().position(|f| f.name == label.name) {
                    issues.push(HierarchyIssue::DuplicateSibling {
                        label: label.clone(),
                        offset,
                        first_offset: parent.features[i].offset,
                        parent: format!("FG-{}", parent.name),
                    });
                    feature = Some(i);
                } else {
                    parent.features.push(Feature {
                        name: label.name.clone(),
                        offset,
                        checks: Vec::new(),
                    });
                    feature = Some(parent.features.len() - 1);
                }
            }
            Level::Check => {
                let (Some(g), Some(f)) = (group, feature) else {
                    issues.push(HierarchyIssue::Orphan {
                        label: label.clone(),
                        offset,
                    });
                    continue;
                };
                let group_name = &tree.groups[g].name;
                let parent_path = format!("FG-{}/FC-{}", group_name, tree.groups[g].features[f].name);
                let parent = &mut tree.groups[g].features[f];
                if let Some(existing) = parent.checks.iter().find(|c| c.name == label.name) {
                    issues.push(HierarchyIssue::DuplicateSibling {
                        label: label.clone(),
                        offset,
                        first_offset: existing.offset,
                        parent: parent_path,
                    });
                } else {
                    parent.checks.push(CheckEntry {
                        name: label.name.clone(),
                        offset,
                    });
                }
            }
        }
    }
    (tree, issues)
}

/// Every FG/FC/CK path of the tree.
pub fn flatten(tree: &LabelTree) -> BTreeSet<QualifiedCheck> {
    tree.groups
        .iter()
        .flat_map(|g| {
            g.features.iter().flat_map(move |f| {
                f.checks.iter().map(move |c| QualifiedCheck {
                    group: g.name.clone(),
                    feature: f.name.clone(),
                    check: c.name.clone(),
                })
            })
        })
        .collect()
}

/// A CK or FC that had no parent in scope when it was encountered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Unresolved {
    #[serde(serialize_with = "ser_display")]
    pub label: Label,
    pub offset: usize,
}

/// Resolves each CK to the path formed by the nearest preceding FG and FC.
///
/// Unlike [`build_tree`], repeated labels are not an error here: downstream
/// artifacts (coverage sources, bug notes) legitimately mention the same
/// group many times.
pub fn resolve_paths(labels: &[LocatedLabel]) -> (BTreeSet<QualifiedCheck>, Vec<Unresolved>) {
    let mut paths = BTreeSet::new();
    let mut unresolved = Vec::new();
    let mut group: Option<&Name> = None;
    let mut feature: Option<&Name> = None;
    for LocatedLabel { label, offset } in labels {
        match label.level {
            Level::Group => {
                group = Some(&label.name);
                feature = None;
            }
            Level::Feature => {
                if group.is_some() {
                    feature = Some(&label.name);
                } else {
                    feature = None;
                    unresolved.push(Unresolved {
                        label: label.clone(),
                        offset: *offset,
                    });
                }
            }
            Level::Check => match (group, feature) {
                (Some(g), Some(f)) => {
                    paths.insert(QualifiedCheck {
                        group: g.clone(),
                        feature: f.clone(),
                        check: label.name.clone(),
                    });
                }
                _ => unresolved.push(Unresolved {
                    label: label.clone(),
                    offset: *offset,
                }),
            },
        }
    }
    (paths, unresolved)
}
