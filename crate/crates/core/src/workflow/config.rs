use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::checker::{CheckerError, CheckerRegistry, CheckerSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read workflow config {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid workflow config at `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

fn default_command_timeout() -> f64 {
    120.0
}

/// A command the agent may launch through `RunTest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllowedCommand {
    pub name: String,
    pub command: String,
    /// `{report_path}` in an argument is replaced by the requested report path.
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "default_command_timeout")]
    pub timeout_s: f64,
    /// Report path used when the request does not name one.
    #[serde(default)]
    pub report_path: Option<String>,
}

/// One workflow node as written in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyStage {
    pub name: String,
    /// Reporting group; substages inherit their parent's phase.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub tips: String,
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default)]
    pub checkers: Vec<CheckerSpec>,
    #[serde(default)]
    pub skippable: bool,
    #[serde(default)]
    pub substages: Vec<VerifyStage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    version: String,
    #[serde(default)]
    commands: Vec<AllowedCommand>,
    stages: Vec<VerifyStage>,
    #[serde(default)]
    skip: Vec<String>,
}

/// A stage in execution order. Substages precede their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatStage {
    pub name: String,
    pub phase: String,
    pub description: String,
    pub tips: String,
    pub outputs: Vec<String>,
    pub checkers: Vec<CheckerSpec>,
    pub skippable: bool,
    pub parent: Option<String>,
    pub substages: Vec<String>,
    /// Config field path of the stage, e.g. `stages[2].substages[0]`.
    pub locus: String,
}

pub const UNASSIGNED_PHASE: &str = "unassigned";

#[derive(Debug, Clone)]
pub struct WorkflowConfig {
    pub version: String,
    pub stages: Vec<VerifyStage>,
    pub commands: Vec<AllowedCommand>,
    pub skip: BTreeSet<String>,
    flat: Vec<FlatStage>,
    digest: String,
}

impl WorkflowConfig {
    pub fn flat(&self) -> &[FlatStage] {
        &self.flat
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    /// Content hash of the canonicalized config file.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.flat.iter().position(|s| s.name == name)
    }

    pub fn is_skipped(&self, index: usize) -> bool {
        self.flat
            .get(index)
            .is_some_and(|s| self.skip.contains(&s.name))
    }

    pub fn command(&self, name: &str) -> Option<&AllowedCommand> {
        self.commands.iter().find(|c| c.name == name)
    }

    /// Adds run-time skip entries on top of the file's own `skip` list.
    pub fn apply_skip_overlay<I, S>(&mut self, names: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        for (i, name) in names.into_iter().enumerate() {
            let name = name.as_ref();
            validate_skip(&self.flat, name, &format!("--skip[{i}]"))?;
            self.skip.insert(name.to_string());
        }
        Ok(())
    }

    pub fn from_yaml(text: &str, registry: &CheckerRegistry) -> Result<Self, ConfigError> {
        let file: ConfigFile = serde_path_to_error::deserialize(serde_yaml::Deserializer::from_str(text))
            .map_err(|err| {
                let path = err.path().to_string();
                invalid(path, err.into_inner().to_string())
            })?;
        let digest = canonical_digest(text)?;

        if file.stages.is_empty() {
            return Err(invalid("stages", "workflow must declare at least one stage"));
        }
        let mut flat = Vec::new();
        for (i, stage) in file.stages.iter().enumerate() {
            flatten_stage(stage, None, None, &format!("stages[{i}]"), &mut flat);
        }

        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        for stage in &flat {
            if stage.name.trim().is_empty() {
                return Err(invalid(format!("{}.name", stage.locus), "stage name must not be empty"));
            }
            if let Some(first) = seen.insert(&stage.name, &stage.locus) {
                return Err(invalid(
                    format!("{}.name", stage.locus),
                    format!("duplicate stage name `{}` (also defined at {first}.name)", stage.name),
                ));
            }
            for (j, spec) in stage.checkers.iter().enumerate() {
                let at = format!("{}.checkers[{j}]", stage.locus);
                match registry.build(spec) {
                    Ok(_) => {}
                    Err(CheckerError::UnknownKind(kind)) => {
                        return Err(invalid(format!("{at}.kind"), format!("unknown checker kind `{kind}`")))
                    }
                    Err(CheckerError::InvalidParams { field, reason, .. }) => {
                        let field = if field == "." { at } else { format!("{at}.{field}") };
                        return Err(invalid(field, reason));
                    }
                }
            }
        }

        let mut names = BTreeSet::new();
        for (i, command) in file.commands.iter().enumerate() {
            if !names.insert(command.name.as_str()) {
                return Err(invalid(
                    format!("commands[{i}].name"),
                    format!("duplicate command name `{}`", command.name),
                ));
            }
            if !(command.timeout_s.is_finite() && command.timeout_s > 0.0) {
                return Err(invalid(format!("commands[{i}].timeout_s"), "must be a positive number"));
            }
        }

        let mut skip = BTreeSet::new();
        for (i, name) in file.skip.iter().enumerate() {
            validate_skip(&flat, name, &format!("skip[{i}]"))?;
            skip.insert(name.clone());
        }

        Ok(WorkflowConfig {
            version: file.version,
            stages: file.stages,
            commands: file.commands,
            skip,
            flat,
            digest,
        })
    }
}

fn validate_skip(flat: &[FlatStage], name: &str, field: &str) -> Result<(), ConfigError> {
    match flat.iter().find(|s| s.name == name) {
        None => Err(invalid(field, format!("unknown stage `{name}`"))),
        Some(stage) if !stage.skippable => {
            Err(invalid(field, format!("stage `{name}` is not skippable")))
        }
        Some(_) => Ok(()),
    }
}

fn flatten_stage(
    stage: &VerifyStage,
    parent: Option<&str>,
    parent_phase: Option<&str>,
    locus: &str,
    out: &mut Vec<FlatStage>,
) {
    let phase = stage
        .phase
        .as_deref()
        .or(parent_phase)
        .unwrap_or(UNASSIGNED_PHASE)
        .to_string();
    for (i, sub) in stage.substages.iter().enumerate() {
        flatten_stage(sub, Some(&stage.name), Some(&phase), &format!("{locus}.substages[{i}]"), out);
    }
    out.push(FlatStage {
        name: stage.name.clone(),
        phase,
        description: stage.description.clone(),
        tips: stage.tips.clone(),
        outputs: stage.outputs.clone(),
        checkers: stage.checkers.clone(),
        skippable: stage.skippable,
        parent: parent.map(str::to_string),
        substages: stage.substages.iter().map(|s| s.name.clone()).collect(),
        locus: locus.to_string(),
    });
}

/// SHA-256 over the config re-serialized as JSON with sorted keys, so
/// comments and formatting do not affect the digest.
fn canonical_digest(text: &str) -> Result<String, ConfigError> {
    let yaml: serde_yaml::Value =
        serde_yaml::from_str(text).map_err(|e| invalid(".", e.to_string()))?;
    let json: serde_json::Value =
        serde_json::to_value(yaml).map_err(|e| invalid(".", format!("cannot canonicalize: {e}")))?;
    let canonical = serde_json::to_string(&json).expect("json value serializes");
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

pub fn load_config(path: &Path) -> Result<WorkflowConfig, ConfigError> {
    load_config_with(path, &CheckerRegistry::default())
}

pub fn load_config_with(path: &Path, registry: &CheckerRegistry) -> Result<WorkflowConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
        path: path.display().to_string(),
        source,
    })?;
    WorkflowConfig::from_yaml(&text, registry)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<WorkflowConfig, ConfigError> {
        WorkflowConfig::from_yaml(text, &CheckerRegistry::default())
    }

    fn field(err: ConfigError) -> String {
        match err {
            ConfigError::Invalid { field, .. } => field,
            other => panic!("{other}"),
        }
    }

    const NESTED: &str = r#"
version: "1"
stages:
  - name: a
    phase: p1
    checkers:
      - kind: file_exists
        paths: [a.txt]
  - name: parent
    phase: p2
    substages:
      - name: child1
      - name: child2
        phase: p3
        skippable: true
  - name: z
"#;

    #[test]
    fn flattens_substages_before_parent() {
        let cfg = parse(NESTED).unwrap();
        let names: Vec<_> = cfg.flat().iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["a", "child1", "child2", "parent", "z"]);
        let phases: Vec<_> = cfg.flat().iter().map(|s| s.phase.as_str()).collect();
        assert_eq!(phases, ["p1", "p2", "p3", "p2", UNASSIGNED_PHASE]);
        assert_eq!(cfg.flat()[1].parent.as_deref(), Some("parent"));
        assert_eq!(cfg.flat()[3].substages, ["child1", "child2"]);
        assert_eq!(cfg.flat()[2].locus, "stages[1].substages[1]");
    }

    #[test]
    fn duplicate_names_cite_both_loci() {
        let err = parse("version: '1'\nstages:\n  - name: a\n  - name: b\n    substages:\n      - name: a\n")
            .unwrap_err();
        let text = err.to_string();
        assert!(text.contains("stages[1].substages[0].name"), "{text}");
        assert!(text.contains("stages[0].name"), "{text}");
    }

    #[test]
    fn skip_must_name_skippable_stage() {
        let base = "version: '1'\nstages:\n  - name: a\n  - name: m\n    skippable: true\n";
        assert!(parse(&format!("{base}skip: [m]\n")).unwrap().skip.contains("m"));
        assert_eq!(field(parse(&format!("{base}skip: [a]\n")).unwrap_err()), "skip[0]");
        assert_eq!(field(parse(&format!("{base}skip: [m, nope]\n")).unwrap_err()), "skip[1]");

        let mut cfg = parse(base).unwrap();
        assert!(cfg.apply_skip_overlay(["a"]).is_err());
        cfg.apply_skip_overlay(["m"]).unwrap();
        assert!(cfg.is_skipped(1));
    }

    #[test]
    fn unknown_keys_and_bad_params_are_rejected() {
        assert_eq!(
            field(parse("version: '1'\nstages:\n  - name: a\n    colour: red\n").unwrap_err()),
            "stages[0].colour"
        );
        assert_eq!(
            field(parse("version: '1'\nstages:\n  - name: a\n    checkers:\n      - kind: nope\n").unwrap_err()),
            "stages[0].checkers[0].kind"
        );
        assert_eq!(
            field(
                parse("version: '1'\nstages:\n  - name: a\n    checkers:\n      - kind: command\n        command: x\n        timeout_s: fast\n")
                    .unwrap_err()
            ),
            "stages[0].checkers[0].timeout_s"
        );
        assert_eq!(field(parse("version: '1'\nstages: []\n").unwrap_err()), "stages");
        assert_eq!(field(parse("stages:\n  - name: a\n").unwrap_err()), ".");
    }

    #[test]
    fn digest_ignores_formatting_but_not_content() {
        let a = parse("version: '1'\nstages:\n  - name: a\n    description: hello\n").unwrap();
        let b = parse("# comment\nstages:\n  - {description: hello, name: a}\nversion: '1'\n").unwrap();
        let c = parse("version: '1'\nstages:\n  - name: a\n    description: hellp\n").unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn command_allowlist_validation() {
        let cfg = parse("version: '1'\ncommands:\n  - name: t\n    command: sh\n    args: [run.sh, '{report_path}']\nstages:\n  - name: a\n").unwrap();
        assert_eq!(cfg.command("t").unwrap().timeout_s, 120.0);
        assert!(cfg.command("u").is_none());
        let err = parse("version: '1'\ncommands:\n  - {name: t, command: a}\n  - {name: t, command: b}\nstages:\n  - name: a\n").unwrap_err();
        assert_eq!(field(err), "commands[1].name");
    }
}
