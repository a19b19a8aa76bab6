//! Staged writes with a manifest on commit and a `failed/` quarantine on error.

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::sha256_hex;
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    /// (name, sha256) of every input read.
    pub inputs: Vec<(String, String)>,
    /// (path, sha256) of every output written; filled in on commit.
    pub outputs: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig, inputs: Vec<(String, String)>) -> Self {
        Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            inputs,
            outputs: Vec::new(),
        }
    }

    /// File name used for a command's manifest, e.g. `il-train.manifest.json`.
    pub fn file_name(command: &str) -> String {
        format!("{}.manifest.json", command.replace(' ', "-"))
    }
}

/// Outputs of one run, written under `<dir>/.staging-<command>` until committed.
#[derive(Debug)]
pub struct Staging {
    dir: PathBuf,
    command: String,
    area: PathBuf,
    files: Vec<(PathBuf, PathBuf)>,
}

impl Staging {
    pub fn new(dir: &Path, command: &str) -> Result<Self> {
        let slug = command.replace(' ', "-");
        let area = dir.join(format!(".staging-{slug}"));
        if area.exists() {
            std::fs::remove_dir_all(&area).map_err(|e| Error::io(&area, e))?;
        }
        std::fs::create_dir_all(&area).map_err(|e| Error::io(&area, e))?;
        Ok(Staging {
            dir: dir.to_path_buf(),
            command: command.into(),
            area,
            files: Vec::new(),
        })
    }

    /// Where the output destined for `dest` currently lives.
    pub fn staged_path(&self, dest: &Path) -> PathBuf {
        self.files
            .iter()
            .find(|(_, d)| d == dest)
            .map_or_else(|| dest.to_path_buf(), |(s, _)| s.clone())
    }

    pub fn write(&mut self, dest: &Path, bytes: &[u8]) -> Result<()> {
        if let Some((staged, _)) = self.files.iter().find(|(_, d)| d == dest) {
            return crate::io::write_file(staged, bytes);
        }
        let staged = self.area.join(format!("{:03}-{}", self.files.len(), flatten(dest)));
        crate::io::write_file(&staged, bytes)?;
        self.files.push((staged, dest.to_path_buf()));
        Ok(())
    }

    /// Moves every staged file to its destination and writes the manifest beside them.
    pub fn commit(self, mut manifest: Manifest) -> Result<PathBuf> {
        for (staged, dest) in &self.files {
            let bytes = crate::io::read_file(staged)?;
            manifest.outputs.push((dest.display().to_string(), sha256_hex(&bytes)));
            if let Some(parent) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            if std::fs::rename(staged, dest).is_err() {
                crate::io::write_file(dest, &bytes)?;
            }
        }
        let path = self.dir.join(Manifest::file_name(&self.command));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        crate::io::write_file(&path, text.as_bytes())?;
        std::fs::remove_dir_all(&self.area).map_err(|e| Error::io(&self.area, e))?;
        Ok(path)
    }

    /// Moves the staging area to `<dir>/failed/<command>-<n>`; `None` when nothing was written.
    pub fn quarantine(self) -> Result<Option<PathBuf>> {
        if self.files.is_empty() {
            let _ = std::fs::remove_dir_all(&self.area);
            return Ok(None);
        }
        let failed = self.dir.join("failed");
        std::fs::create_dir_all(&failed).map_err(|e| Error::io(&failed, e))?;
        let slug = self.command.replace(' ', "-");
        let target = (0..)
            .map(|n| failed.join(format!("{slug}-{n}")))
            .find(|p| !p.exists())
            .expect("unbounded");
        std::fs::rename(&self.area, &target).map_err(|e| Error::io(&target, e))?;
        Ok(Some(target))
    }
}

fn flatten(dest: &Path) -> String {
    dest.file_name()
        .map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned())
}
