//! Shared configuration file and on-disk data layout.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ingest::DEFAULT_RETENTION_DAYS;
use crate::recommend::DEFAULT_K;
use crate::{Error, Result};

pub const DEFAULT_PORT: u16 = 8080;

/// `key = value` settings shared by the CLI and the HTTP service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data_dir: PathBuf,
    pub port: u16,
    pub default_k: usize,
    pub retention_days: u32,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            data_dir: PathBuf::from("data"),
            port: DEFAULT_PORT,
            default_k: DEFAULT_K,
            retention_days: DEFAULT_RETENTION_DAYS,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config =
            toml::from_str(text).map_err(|e| Error::parse("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative `data_dir` is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if cfg.data_dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.data_dir = parent.join(&cfg.data_dir);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.default_k == 0 {
            return Err(Error::InvalidArgument("default_k must be >= 1".into()));
        }
        if self.retention_days == 0 {
            return Err(Error::InvalidArgument("retention_days must be >= 1".into()));
        }
        Ok(())
    }

    pub fn layout(&self) -> DataLayout {
        DataLayout::new(&self.data_dir)
    }
}

/// Where each artifact lives under the data directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataLayout {
    pub root: PathBuf,
}

impl DataLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DataLayout { root: root.into() }
    }

    pub fn events_dir(&self) -> PathBuf {
        self.root.join("events")
    }

    /// Registry and pipeline state live directly under the root.
    pub fn state_dir(&self) -> PathBuf {
        self.root.clone()
    }

    pub fn graph_dir(&self) -> PathBuf {
        self.root.join("graph")
    }

    pub fn index_dir(&self) -> PathBuf {
        self.root.join("index")
    }

    pub fn artifact_index(&self) -> PathBuf {
        self.index_dir().join(crate::index::ARTIFACT_INDEX_FILE)
    }

    pub fn expert_index(&self) -> PathBuf {
        self.index_dir().join(crate::index::EXPERT_INDEX_FILE)
    }

    pub fn follows(&self) -> PathBuf {
        self.root.join(crate::feed::FOLLOWS_FILE)
    }

    pub fn telemetry(&self) -> PathBuf {
        self.root.join("telemetry.ndjson")
    }

    pub fn synth_dir(&self) -> PathBuf {
        self.root.join("synth")
    }
}
