//! Per-directory manifests: config hash, seed and a SHA-256 per artifact.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    /// Digests of the input files the stage read.
    pub inputs: BTreeMap<String, String>,
    /// Digest of every file in the directory except the manifest.
    pub artifacts: BTreeMap<String, String>,
    pub generator: String,
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    /// Hashes every regular file in `dir` (not recursing).
    pub fn scan(dir: &Path, stage: &str, config_hash: &str, seed: u64, inputs: BTreeMap<String, String>) -> io::Result<Self> {
        let mut artifacts = BTreeMap::new();
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name == MANIFEST_FILE || !entry.file_type()?.is_file() {
                continue;
            }
            artifacts.insert(name, sha256_file(&entry.path())?);
        }
        Ok(Manifest {
            stage: stage.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            inputs,
            artifacts,
            generator: concat!("dbforge ", env!("CARGO_PKG_VERSION")).to_string(),
        })
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let mut body = serde_json::to_string_pretty(self).map_err(io::Error::from)?;
        body.push('\n');
        fs::write(dir.join(MANIFEST_FILE), body)
    }

    pub fn read(dir: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(io::Error::from)
    }

    /// Rescans `dir` and writes its manifest.
    pub fn refresh(dir: &Path, stage: &str, config_hash: &str, seed: u64, inputs: BTreeMap<String, String>) -> io::Result<Self> {
        let m = Self::scan(dir, stage, config_hash, seed, inputs)?;
        m.write(dir)?;
        Ok(m)
    }
}
