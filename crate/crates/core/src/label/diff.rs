use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::QualifiedCheck;

/// Paths present on only one side of a comparison.
///
/// `missing` are reference paths the candidate omits; `extra` are candidate
/// paths the reference never defined.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyDiff {
    pub missing: BTreeSet<QualifiedCheck>,
    pub extra: BTreeSet<QualifiedCheck>,
}

impl ConsistencyDiff {
    pub fn is_empty(&self) -> bool {
        self.missing.is_empty() && self.extra.is_empty()
    }
}

pub fn diff_bidirectional(
    reference: &BTreeSet<QualifiedCheck>,
    candidate: &BTreeSet<QualifiedCheck>,
) -> ConsistencyDiff {
    ConsistencyDiff {
        missing: reference.difference(candidate).cloned().collect(),
        extra: candidate.difference(reference).cloned().collect(),
    }
}
