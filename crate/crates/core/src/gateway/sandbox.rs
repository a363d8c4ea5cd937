use std::fs;
use std::io;
use std::path::{Component, Path, PathBuf};

use thiserror::Error;

/// Directory under the workspace that holds engine state; never writable
/// through the gateway.
pub const STATE_DIR: &str = ".stagegate";

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("path escapes the workspace: {0}")]
    PathEscape(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

/// Confines artifact access to one workspace directory.
#[derive(Debug, Clone)]
pub struct Sandbox {
    root: PathBuf,
    protected: Vec<PathBuf>,
}

impl Sandbox {
    pub fn new(workspace: &Path) -> io::Result<Self> {
        Ok(Sandbox {
            root: fs::canonicalize(workspace)?,
            protected: Vec::new(),
        })
    }

    /// Forbids writes to `path` (e.g. the workflow config).
    pub fn protect(&mut self, path: &Path) {
        if let Ok(p) = fs::canonicalize(path) {
            self.protected.push(p);
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Resolves a workspace-relative path, following any existing symlinks,
    /// and rejects anything that lands outside the workspace.
    pub fn resolve(&self, rel: &str) -> Result<PathBuf, SandboxError> {
        let escape = || SandboxError::PathEscape(rel.to_string());
        if rel.is_empty() || rel.contains('\0') {
            return Err(escape());
        }
        let rel_path = Path::new(rel);
        for c in rel_path.components() {
            match c {
                Component::Normal(_) | Component::CurDir => {}
                Component::ParentDir | Component::RootDir | Component::Prefix(_) => return Err(escape()),
            }
        }
        let joined = self.root.join(rel_path);
        // The deepest existing ancestor decides where the path really points.
        let mut probe = joined.as_path();
        let mut tail = Vec::new();
        loop {
            if fs::symlink_metadata(probe).is_ok() {
                let real = fs::canonicalize(probe).map_err(|_| escape())?;
                if !real.starts_with(&self.root) {
                    return Err(escape());
                }
                let mut out = real;
                for part in tail.iter().rev() {
                    out.push(part);
                }
                return Ok(out);
            }
            match (probe.parent(), probe.file_name()) {
                (Some(parent), Some(name)) => {
                    tail.push(name.to_os_string());
                    probe = parent;
                }
                _ => return Err(escape()),
            }
        }
    }

    /// Like [`Sandbox::resolve`], additionally refusing the state directory
    /// and protected files.
    pub fn resolve_for_write(&self, rel: &str) -> Result<PathBuf, SandboxError> {
        let path = self.resolve(rel)?;
        let inside = path.strip_prefix(&self.root).unwrap_or(&path);
        let first = inside.components().next();
        if inside.as_os_str().is_empty()
            || matches!(first, Some(Component::Normal(n)) if n == STATE_DIR)
            || self.protected.iter().any(|p| p == &path)
        {
            return Err(SandboxError::PathEscape(rel.to_string()));
        }
        Ok(path)
    }

    pub fn read(&self, rel: &str) -> Result<String, SandboxError> {
        let path = self.resolve(rel)?;
        fs::read_to_string(&path).map_err(|source| SandboxError::Io {
            path: rel.to_string(),
            source,
        })
    }

    pub fn write(&self, rel: &str, content: &str) -> Result<PathBuf, SandboxError> {
        let path = self.resolve_for_write(rel)?;
        let io_err = |source| SandboxError::Io {
            path: rel.to_string(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        // Re-check after creating directories in case a parent was swapped.
        let path = self.resolve_for_write(rel)?;
        fs::write(&path, content).map_err(io_err)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_stay_inside() {
        let dir = tempfile::tempdir().unwrap();
        let sb = Sandbox::new(dir.path()).unwrap();
        for bad in ["", "../x", "a/../../x", "/etc/passwd", "a/..", ".stagegate/state.json", "."] {
            assert!(
                matches!(sb.write(bad, "x"), Err(SandboxError::PathEscape(_))),
                "{bad:?}"
            );
        }
        sb.write("docs/a.md", "hi").unwrap();
        assert_eq!(sb.read("docs/a.md").unwrap(), "hi");
        assert_eq!(sb.read("./docs/a.md").unwrap(), "hi");
    }

    #[cfg(unix)]
    #[test]
    fn symlinks_out_of_the_workspace_are_refused() {
        let outside = tempfile::tempdir().unwrap();
        let dir = tempfile::tempdir().unwrap();
        std::os::unix::fs::symlink(outside.path(), dir.path().join("link")).unwrap();
        std::os::unix::fs::symlink("/nonexistent/target", dir.path().join("dangling")).unwrap();
        let sb = Sandbox::new(dir.path()).unwrap();
        assert!(matches!(sb.write("link/x", "x"), Err(SandboxError::PathEscape(_))));
        assert!(matches!(sb.write("dangling", "x"), Err(SandboxError::PathEscape(_))));
        assert!(matches!(sb.read("link"), Err(SandboxError::PathEscape(_))));
        assert_eq!(fs::read_dir(outside.path()).unwrap().count(), 0);
    }

    #[test]
    fn protected_files_are_read_only() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("cfg.yaml"), "x").unwrap();
        let mut sb = Sandbox::new(dir.path()).unwrap();
        sb.protect(&dir.path().join("cfg.yaml"));
        assert!(sb.write("cfg.yaml", "y").is_err());
        assert_eq!(sb.read("cfg.yaml").unwrap(), "x");
    }
}
