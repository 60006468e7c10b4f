//! Provenance manifests and staged, all-or-nothing output writing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `git rev-parse HEAD` of the working directory, if there is one.
pub fn git_revision() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub scene: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub git_revision: String,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub timings_ms: BTreeMap<String, f64>,
}

/// Files for one command, held in memory until every stage has succeeded.
pub struct Staged {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
    inputs: Vec<FileRecord>,
    pub timings_ms: BTreeMap<String, f64>,
}

impl Staged {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            inputs: Vec::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(FileRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub fn time(&mut self, stage: &str, ms: f64) {
        self.timings_ms.insert(stage.into(), ms);
    }

    /// Writes every staged file atomically, then `<command>.manifest.json`.
    pub fn commit<C: Serialize>(self, command: &str, scene: &str, seed: u64, config: &C) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let mut outputs = Vec::new();
        for (name, bytes) in &self.files {
            depthguide::io::write_atomic(self.dir.join(name), bytes)?;
            outputs.push(FileRecord { path: name.clone(), sha256: sha256_hex(bytes), bytes: bytes.len() });
        }
        let config = serde_json::to_value(config)?;
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            scene: scene.into(),
            seed,
            config_sha256: sha256_hex(&serde_json::to_vec(&config)?),
            config,
            git_revision: git_revision(),
            inputs: self.inputs,
            outputs,
            timings_ms: self.timings_ms,
        };
        let path = self.dir.join(format!("{command}.manifest.json"));
        depthguide::io::write_atomic(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        Ok(path)
    }
}
