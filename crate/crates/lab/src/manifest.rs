//! Run manifests and atomic file output.

use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{LabError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Writes to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| LabError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        LabError::io(path, e)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTiming {
    pub step: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRun {
    pub command: String,
    pub finished_unix: u64,
    pub timings: Vec<StepTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Relative to the output directory.
    pub path: String,
    pub kind: String,
    pub sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Hash of everything that determines a training run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub runs: Vec<CommandRun>,
    pub artifacts: Vec<ArtifactEntry>,
}

impl RunManifest {
    pub fn new(config_hash: &str) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config_hash.into(),
            runs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn read(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(MANIFEST_FILE);
        match std::fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| LabError::Artifact(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(LabError::io(path, e)),
        }
    }

    /// The existing manifest of `dir` if it belongs to the same config,
    /// otherwise a fresh one.
    pub fn open(dir: &Path, config_hash: &str) -> Result<Self> {
        Ok(match Self::read(dir) {
            Ok(Some(m)) if m.config_hash == config_hash => m,
            _ => Self::new(config_hash),
        })
    }

    pub fn artifact(&self, path: &str) -> Option<&ArtifactEntry> {
        self.artifacts.iter().find(|a| a.path == path)
    }

    pub fn add_artifact(&mut self, entry: ArtifactEntry) {
        self.artifacts.retain(|a| a.path != entry.path);
        self.artifacts.push(entry);
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    }

    /// Replaces the previous record of the same command.
    pub fn record_run(&mut self, command: &str, timings: Vec<StepTiming>) {
        let finished_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or(Duration::ZERO)
            .as_secs();
        self.runs.retain(|r| r.command != command);
        self.runs.push(CommandRun {
            command: command.into(),
            finished_unix,
            timings,
        });
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| LabError::Runtime(e.to_string()))?;
        write_atomic(&dir.join(MANIFEST_FILE), &json)
    }
}

/// Collects artifacts and timings for one command and writes them together.
pub struct Emitter {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>, ArtifactEntry)>,
}

impl Emitter {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, kind: &str, bytes: Vec<u8>) -> &mut ArtifactEntry {
        let name = name.into();
        let entry = ArtifactEntry {
            path: name.clone(),
            kind: kind.into(),
            sha256: sha256_hex(&bytes),
            seed: None,
            train_key: None,
        };
        self.files.push((name, bytes, entry));
        &mut self.files.last_mut().expect("just pushed").2
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _, _)| n.as_str())
    }

    /// Writes every file, then the updated manifest last.
    pub fn finish(self, config_hash: &str, command: &str, timings: Vec<StepTiming>) -> Result<()> {
        let mut manifest = RunManifest::open(&self.dir, config_hash)?;
        for (name, bytes, entry) in self.files {
            write_atomic(&self.dir.join(&name), &bytes)?;
            manifest.add_artifact(entry);
        }
        manifest.record_run(command, timings);
        manifest.write(&self.dir)
    }
}
