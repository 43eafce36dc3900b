//! Staged output directory and run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::Serialize;

/// Files are written under a sibling temp directory and moved into place by
/// [`Staging::promote`]; a failed run leaves the destination untouched.
pub struct Staging {
    target: PathBuf,
    tmp: PathBuf,
    files: Vec<String>,
}

impl Staging {
    pub fn new(target: &Path) -> Result<Self> {
        let name = target
            .file_name()
            .with_context(|| format!("output path {} has no final component", target.display()))?
            .to_string_lossy()
            .into_owned();
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).with_context(|| format!("creating {}", parent.display()))?;
        let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        Ok(Self {
            target: target.to_path_buf(),
            tmp,
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        if self.files.iter().any(|f| f == name) {
            bail!("output file {name} written twice");
        }
        let path = self.tmp.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// Replace the target directory with the staged one.
    pub fn promote(self) -> Result<PathBuf> {
        let old = self.tmp.with_extension("old");
        if self.target.exists() {
            fs::rename(&self.target, &old)
                .with_context(|| format!("moving aside existing {}", self.target.display()))?;
        }
        fs::rename(&self.tmp, &self.target).with_context(|| format!("promoting to {}", self.target.display()))?;
        if old.exists() {
            fs::remove_dir_all(&old)?;
        }
        Ok(self.target.clone())
    }

    pub fn discard(self) {
        let _ = fs::remove_dir_all(&self.tmp);
    }
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub gemon: &'static str,
    pub manifest_format: u32,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub command: &'a str,
    pub config_path: Option<String>,
    /// The fully resolved config, defaults included.
    pub config: &'a C,
    pub seeds: &'a [u64],
    pub threads: usize,
    pub versions: Versions,
    pub started_unix_secs: u64,
    pub wall_time_secs: f64,
    pub exit_code: u8,
    pub verdicts: Vec<(String, String)>,
    pub files: Vec<String>,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn versions() -> Versions {
    Versions {
        gemon: env!("CARGO_PKG_VERSION"),
        manifest_format: 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn promotion_replaces_existing_directory() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("run");
        fs::create_dir(&target).unwrap();
        fs::write(target.join("stale.csv"), "x").unwrap();

        let mut st = Staging::new(&target).unwrap();
        st.write("a.csv", "a\n1\n").unwrap();
        assert!(st.write("a.csv", "again").is_err());
        assert!(!target.join("a.csv").exists());
        st.promote().unwrap();
        assert_eq!(fs::read_to_string(target.join("a.csv")).unwrap(), "a\n1\n");
        assert!(!target.join("stale.csv").exists());
        assert_eq!(fs::read_dir(root.path()).unwrap().count(), 1);
    }

    #[test]
    fn discard_leaves_nothing() {
        let root = tempfile::tempdir().unwrap();
        let mut st = Staging::new(&root.path().join("run")).unwrap();
        st.write("a.csv", "a\n").unwrap();
        st.discard();
        assert_eq!(fs::read_dir(root.path()).unwrap().count(), 0);
    }
}
