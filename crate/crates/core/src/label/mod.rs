//! Hierarchical traceability labels.
//!
//! Three label levels exist: function groups (`<FG-NAME>`), function
//! checkpoints (`<FC-NAME>`) and check points (`<CK-NAME>`). A check point is
//! only meaningful together with its parents, so most comparisons happen on
//! [`QualifiedCheck`] paths of the form `FG-A/FC-B/CK-C`.

mod diff;
mod lexer;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use diff::{diff_bidirectional, ConsistencyDiff};
pub use lexer::{lex_labels, LexOutput, LexWarning, LocatedLabel};
pub use tree::{
    build_tree, build_tree_lenient, flatten, resolve_paths, Feature, FunctionGroup,
    HierarchyError, HierarchyIssue, LabelTree, Unresolved,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    #[serde(rename = "FG")]
    Group,
    #[serde(rename = "FC")]
    Feature,
    #[serde(rename = "CK")]
    Check,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Group, Level::Feature, Level::Check];

    pub fn prefix(self) -> &'static str {
        match self {
            Level::Group => "FG",
            Level::Feature => "FC",
            Level::Check => "CK",
        }
    }

    pub fn from_prefix(prefix: &str) -> Option<Level> {
        match prefix {
            "FG" => Some(Level::Group),
            "FC" => Some(Level::Feature),
            "CK" => Some(Level::Check),
            _ => None,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prefix())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("label name is empty")]
    EmptyName,
    #[error("label name `{0}` must match [A-Z0-9][A-Z0-9_-]*")]
    InvalidName(String),
    #[error("`{0}` is not a label of the form <FG-NAME>, <FC-NAME> or <CK-NAME>")]
    Malformed(String),
    #[error("`{0}` is not a qualified path of the form FG-x/FC-y/CK-z")]
    MalformedPath(String),
}

/// A validated label name: `[A-Z0-9][A-Z0-9_-]*`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name(String);

pub(crate) fn is_name_start(b: u8) -> bool {
    b.is_ascii_uppercase() || b.is_ascii_digit()
}

pub(crate) fn is_name_char(b: u8) -> bool {
    is_name_start(b) || b == b'_' || b == b'-'
}

impl Name {
    pub fn new(name: impl Into<String>) -> Result<Self, LabelError> {
        let name = name.into();
        let bytes = name.as_bytes();
        match bytes.first() {
            None => Err(LabelError::EmptyName),
            Some(&first) if is_name_start(first) && bytes[1..].iter().all(|&b| is_name_char(b)) => {
                Ok(Name(name))
            }
            Some(_) => Err(LabelError::InvalidName(name)),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One FG/FC/CK token. Renders as `<LEVEL-NAME>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label {
    pub level: Level,
    pub name: Name,
}

impl Label {
    pub fn new(level: Level, name: &str) -> Result<Self, LabelError> {
        Ok(Label {
            level,
            name: Name::new(name)?,
        })
    }

    /// `FG-NAME` without the angle brackets.
    pub fn bare(&self) -> String {
        format!("{}-{}", self.level, self.name)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}-{}>", self.level, self.name)
    }
}

impl FromStr for Label {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s
            .strip_prefix('<')
            .and_then(|rest| rest.strip_suffix('>'))
            .ok_or_else(|| LabelError::Malformed(s.to_string()))?;
        let (prefix, name) = inner
            .split_once('-')
            .ok_or_else(|| LabelError::Malformed(s.to_string()))?;
        let level = Level::from_prefix(prefix).ok_or_else(|| LabelError::Malformed(s.to_string()))?;
        Label::new(level, name)
    }
}

/// A fully qualified check point, `FG-x/FC-y/CK-z`.
///
/// Ordering is lexicographic on (group, feature, check), which keeps path
/// sets and the messages derived from them in a stable order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QualifiedCheck {
    pub group: Name,
    pub feature: Name,
    pub check: Name,
}

impl QualifiedCheck {
    pub fn new(group: &str, feature: &str, check: &str) -> Result<Self, LabelError> {
        Ok(QualifiedCheck {
            group: Name::new(group)?,
            feature: Name::new(feature)?,
            check: Name::new(check)?,
        })
    }

    pub fn path(&self) -> String {
        self.to_string()
    }

    pub fn labels(&self) -> [Label; 3] {
        [
            Label {
                level: Level::Group,
                name: self.group.clone(),
            },
            Label {
                level: Level::Feature,
                name: self.feature.clone(),
            },
            Label {
                level: Level::Check,
                name: self.check.clone(),
            },
        ]
    }
}

impl fmt::Display for QualifiedCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FG-{}/FC-{}/CK-{}", self.group, self.feature, self.check)
    }
}

impl FromStr for QualifiedCheck {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || LabelError::MalformedPath(s.to_string());
        let mut segments = s.split('/');
        let mut take = |prefix: &str| -> Result<Name, LabelError> {
            let segment = segments.next().ok_or_else(malformed)?;
            let name = segment
                .strip_prefix(prefix)
                .and_then(|rest| rest.strip_prefix('-'))
                .ok_or_else(malformed)?;
            Name::new(name).map_err(|_| malformed())
        };
        let group = take("FG")?;
        let feature = take("FC")?;
        let check = take("CK")?;
        if segments.next().is_some() {
            return Err(malformed());
        }
        Ok(QualifiedCheck {
            group,
            feature,
            check,
        })
    }
}

impl Serialize for QualifiedCheck {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for QualifiedCheck {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}
