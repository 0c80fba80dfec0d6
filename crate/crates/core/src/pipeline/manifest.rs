use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::io::{read_json, write_json};
use crate::trex::SamplerKind;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

/// Provenance record written beside the artifacts of every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub scenario: u32,
    pub seed: Option<u64>,
    pub sampler: Option<SamplerKind>,
    pub config_hash: String,
    /// The run configuration with its output directory cleared.
    pub config: RunConfig,
    pub files: Vec<FileEntry>,
    #[serde(default)]
    pub extra: serde_json::Value,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new(stage: &str, scenario: u32, cfg: &RunConfig) -> Self {
        let mut config = cfg.clone();
        config.out_dir = Default::default();
        Self {
            stage: stage.to_string(),
            scenario,
            seed: None,
            sampler: None,
            config_hash: cfg.hash(),
            config,
            files: Vec::new(),
            extra: serde_json::Value::Null,
        }
    }

    /// Records a file that already exists under `dir`.
    pub fn add_file(&mut self, dir: &Path, relative: &str) -> Result<()> {
        let sha256 = sha256_file(&dir.join(relative))?;
        self.files.push(FileEntry {
            path: relative.to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        read_json(&dir.join(MANIFEST_FILE))
    }
}
