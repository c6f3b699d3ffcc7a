//! Run manifests and the output directory that records every artifact it writes.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{FrameDtype, RunConfig};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PROGRESS_FILE: &str = "progress.jsonl";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn now_unix_s() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

impl FileHash {
    pub fn of_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_string_lossy().into_owned(),
            sha256: sha256_hex(&bytes),
        })
    }
}

/// The command that produced a manifest, with every option needed to run it again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum CommandSpec {
    Simulate {
        frame_dtype: FrameDtype,
    },
    Reconstruct {
        frames: PathBuf,
        backgrounds: Option<PathBuf>,
        positions: Option<PathBuf>,
        frozen_positions: bool,
    },
    Bench,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: CommandSpec,
    pub config: RunConfig,
    pub seed: u64,
    pub inputs: Vec<FileHash>,
    /// Output files relative to the output directory. The manifest and the progress log are not listed.
    pub artifacts: Vec<FileHash>,
    pub tool_version: String,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub exit_code: i32,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn artifact(&self, path: &str) -> Option<&FileHash> {
        self.artifacts.iter().find(|a| a.path == path)
    }

    /// Checks that every input still has its recorded hash.
    pub fn verify_inputs(&self) -> Result<()> {
        for input in &self.inputs {
            let now = FileHash::of_file(Path::new(&input.path))?;
            if now.sha256 != input.sha256 {
                return Err(Error::invalid(format!("input {} changed since the run", input.path)));
            }
        }
        Ok(())
    }
}

/// Output directory that tracks written files so a failed run can be removed.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<(String, String)>,
    created: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        let mut created = Vec::new();
        let mut p = root.to_path_buf();
        while !p.as_os_str().is_empty() && !p.exists() {
            created.push(p.clone());
            if !p.pop() {
                break;
            }
        }
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
            created,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn write_raw(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            let mut p = parent.to_path_buf();
            while p.starts_with(&self.root) && p != self.root && !p.exists() {
                self.created.push(p.clone());
                p.pop();
            }
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let tmp = path.with_extension("partial");
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Writes an artifact atomically and records its hash.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.write_raw(rel, bytes)?;
        self.written.retain(|(p, _)| p != rel);
        self.written.push((rel.to_string(), sha256_hex(bytes)));
        Ok(path)
    }

    /// Appends one JSON line to the progress log.
    pub fn progress(&self, record: &serde_json::Value) -> Result<()> {
        use std::io::Write;
        let path = self.root.join(PROGRESS_FILE);
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        writeln!(f, "{record}").map_err(|e| Error::io(&path, e))
    }

    pub fn artifacts(&self) -> Vec<FileHash> {
        let mut out: Vec<FileHash> = self
            .written
            .iter()
            .map(|(p, h)| FileHash {
                path: p.clone(),
                sha256: h.clone(),
            })
            .collect();
        out.sort_by(|a, b| a.path.cmp(&b.path));
        out
    }

    pub fn write_manifest(&mut self, manifest: &RunManifest) -> Result<PathBuf> {
        self.write_raw(MANIFEST_FILE, &serde_json::to_vec_pretty(manifest)?)
    }

    /// Removes everything this run wrote, including directories it created.
    pub fn discard(self) {
        for (rel, _) in &self.written {
            let _ = std::fs::remove_file(self.root.join(rel));
        }
        let _ = std::fs::remove_file(self.root.join(PROGRESS_FILE));
        let mut dirs = self.created;
        dirs.sort_by_key(|d| std::cmp::Reverse(d.components().count()));
        for dir in dirs {
            let _ = std::fs::remove_dir(dir);
        }
    }
}
