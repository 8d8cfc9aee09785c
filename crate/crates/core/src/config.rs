//! Run configuration (TOML) with defaults taken from the original setup:
//! 10,000 training molecules, out-of-domain records from ordinal 500,000,
//! 200 questions per group, 3 repetitions.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::CacheFormat;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("config field {field}: {message}")]
    Invalid { field: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub database: PathBuf,
    pub templates: PathBuf,
    pub blocklist: Option<PathBuf>,
    /// External template vectors; TF-IDF is used when absent.
    pub vectors: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            database: "data/sample_records.csv".into(),
            templates: "data/templates.jsonl".into(),
            blocklist: None,
            vectors: None,
            cache_dir: "cache".into(),
            output_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub train_n: usize,
    pub out_domain_start: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            train_n: 10_000,
            out_domain_start: 500_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityConfig {
    pub radius: u32,
    pub nbits: u32,
    pub k: usize,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            radius: 2,
            nbits: 2048,
            k: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbscanConfig {
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for DbscanConfig {
    fn default() -> Self {
        DbscanConfig { eps: 0.55, min_pts: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    pub count: usize,
    pub reps: u8,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings { count: 200, reps: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheSettings {
    pub format: CacheFormat,
}

impl Default for CacheSettings {
    fn default() -> Self {
        CacheSettings {
            format: CacheFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub partition: PartitionConfig,
    pub similarity: SimilarityConfig,
    pub dbscan: DbscanConfig,
    pub bench: BenchSettings,
    pub cache: CacheSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            paths: Paths::default(),
            partition: PartitionConfig::default(),
            similarity: SimilarityConfig::default(),
            dbscan: DbscanConfig::default(),
            bench: BenchSettings::default(),
            cache: CacheSettings::default(),
        }
    }
}

/// The parameters that shape generated data; paths are excluded so that the
/// same run in two directories hashes identically.
#[derive(Serialize)]
struct GenerationParams<'a> {
    partition: &'a PartitionConfig,
    similarity: &'a SimilarityConfig,
    dbscan: &'a DbscanConfig,
    bench: &'a BenchSettings,
    cache: &'a CacheSettings,
    external_vectors: bool,
    blocklist: bool,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.to_path_buf(),
            source,
        })?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text, path)?;
        if let Some(base) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            cfg.paths.rebase(base);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field, message: &str| {
            Err(ConfigError::Invalid {
                field,
                message: message.to_string(),
            })
        };
        if self.partition.train_n == 0 {
            return invalid("partition.train_n", "must be positive");
        }
        if self.partition.train_n > self.partition.out_domain_start {
            return invalid(
                "partition.train_n",
                &format!("{} exceeds partition.out_domain_start {}", self.partition.train_n, self.partition.out_domain_start),
            );
        }
        if self.similarity.k == 0 {
            return invalid("similarity.k", "must be positive");
        }
        if self.similarity.radius == 0 {
            return invalid("similarity.radius", "must be positive");
        }
        if self.similarity.nbits < 64 || !self.similarity.nbits.is_power_of_two() {
            return invalid("similarity.nbits", "must be a power of two >= 64");
        }
        if !(self.dbscan.eps.is_finite() && (0.0..=2.0).contains(&self.dbscan.eps)) {
            return invalid("dbscan.eps", "must lie in [0, 2] (cosine distance)");
        }
        if self.dbscan.min_pts == 0 {
            return invalid("dbscan.min_pts", "must be positive");
        }
        if self.bench.count == 0 {
            return invalid("bench.count", "must be positive");
        }
        if self.bench.reps == 0 {
            return invalid("bench.reps", "must be positive");
        }
        Ok(())
    }

    /// SHA-256 of the generation parameters (no paths, no seed).
    pub fn config_hash(&self) -> String {
        let params = GenerationParams {
            partition: &self.partition,
            similarity: &self.similarity,
            dbscan: &self.dbscan,
            bench: &self.bench,
            cache: &self.cache,
            external_vectors: self.paths.vectors.is_some(),
            blocklist: self.paths.blocklist.is_some(),
        };
        let json = serde_json::to_string(&params).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

impl Paths {
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.database);
        fix(&mut self.templates);
        fix(&mut self.cache_dir);
        fix(&mut self.output_dir);
        if let Some(p) = self.blocklist.as_mut() {
            fix(p);
        }
        if let Some(p) = self.vectors.as_mut() {
            fix(p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.partition.train_n, 10_000);
        assert_eq!(cfg.partition.out_domain_start, 500_000);
        assert_eq!((cfg.bench.count, cfg.bench.reps), (200, 3));
    }

    #[test]
    fn field_level_errors() {
        let cfg = RunConfig::from_toml_str("[partition]\ntrain_n = 20\nout_domain_start = 10\n", Path::new("x.toml")).unwrap();
        let e = cfg.validate().unwrap_err();
        assert!(e.to_string().contains("partition.train_n"));
        let e = RunConfig::from_toml_str("[bench]\ncout = 3\n", Path::new("x.toml")).unwrap_err();
        assert!(e.to_string().contains("cout"));
    }

    #[test]
    fn hash_ignores_paths_and_seed() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.paths.output_dir = "/elsewhere".into();
        b.seed = 7;
        assert_eq!(a.config_hash(), b.config_hash());
        b.bench.count = 10;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        fs::write(&p, "seed = 3\n[paths]\ndatabase = \"db.csv\"\n").unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.paths.database, dir.path().join("db.csv"));
    }
}
