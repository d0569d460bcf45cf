//! Per-run record sufficient to repeat the run.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::Command;

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub train: u64,
    pub augment: u64,
    pub texture: u64,
    pub defect: u64,
}

impl Seeds {
    fn of(config: &RunConfig) -> Self {
        Self {
            train: config.train.seed,
            augment: config.train.augment.seed,
            texture: config.corpus.texture.seed,
            defect: config.corpus.defect.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub out: PathBuf,
    pub threads: usize,
    pub seeds: Seeds,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(command: Command, out: &Path, threads: usize, config: &RunConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            command,
            out: out.to_path_buf(),
            threads,
            seeds: Seeds::of(config),
            config: config.clone(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(FILE_NAME);
        let json = serde_json::to_string_pretty(self).context("serializing manifest")?;
        std::fs::write(&path, json + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}
