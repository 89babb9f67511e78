//! Output bundles: every written file is recorded with its checksum.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Complete,
    Incomplete,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub command: String,
    pub config_hash: Option<String>,
    pub seeds: BTreeMap<String, u64>,
    pub status: Status,
    pub failed_stage: Option<String>,
    pub artifacts: Vec<Artifact>,
}

/// A directory of outputs plus the manifest describing them.
pub struct Bundle {
    root: PathBuf,
    command: String,
    config_hash: Option<String>,
    seeds: BTreeMap<String, u64>,
    artifacts: BTreeMap<String, Artifact>,
}

impl Bundle {
    pub fn create(root: &Path, command: &str) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            command: command.to_string(),
            config_hash: None,
            seeds: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn set_config_hash(&mut self, hash: String) {
        self.config_hash = Some(hash);
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    /// Absolute path for a relative artifact name, creating parent folders.
    pub fn path(&self, rel: &str) -> CliResult<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        Ok(p)
    }

    /// Records a file already written at `rel`.
    pub fn record(&mut self, rel: &str) -> CliResult<()> {
        let p = self.root.join(rel);
        let data = fs::read(&p).map_err(|e| CliError::io(&p, e))?;
        self.artifacts.insert(
            rel.to_string(),
            Artifact { path: rel.to_string(), sha256: hex::encode(Sha256::digest(&data)), bytes: data.len() as u64 },
        );
        Ok(())
    }

    pub fn write_bytes(&mut self, rel: &str, data: &[u8]) -> CliResult<()> {
        let p = self.path(rel)?;
        fs::write(&p, data).map_err(|e| CliError::io(&p, e))?;
        self.record(rel)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
        text.push('\n');
        self.write_bytes(rel, text.as_bytes())
    }

    /// Streams through a writer, e.g. a CSV emitter from the core library.
    pub fn write_with<F>(&mut self, rel: &str, stage: &'static str, f: F) -> CliResult<()>
    where
        F: FnOnce(BufWriter<fs::File>) -> auditlens_core::Result<()>,
    {
        let p = self.path(rel)?;
        let file = fs::File::create(&p).map_err(|e| CliError::io(&p, e))?;
        f(BufWriter::new(file)).map_err(|source| CliError::Stage { stage, source })?;
        self.record(rel)
    }

    pub fn manifest(&self, status: Status, failed_stage: Option<&str>) -> Manifest {
        Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.clone(),
            config_hash: self.config_hash.clone(),
            seeds: self.seeds.clone(),
            status,
            failed_stage: failed_stage.map(str::to_string),
            artifacts: self.artifacts.values().cloned().collect(),
        }
    }

    pub fn finish(&self, status: Status, failed_stage: Option<&str>) -> CliResult<()> {
        let manifest = self.manifest(status, failed_stage);
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Internal(e.to_string()))?;
        text.push('\n');
        let p = self.root.join(MANIFEST_FILE);
        fs::write(&p, text).map_err(|e| CliError::io(&p, e))
    }
}

pub fn read_manifest(dir: &Path) -> CliResult<Manifest> {
    let p = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config { path: p, message: e.to_string() })
}
