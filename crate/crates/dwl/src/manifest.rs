use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Written next to every command's outputs as `run_manifest.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub profile: String,
    pub seed: u64,
    pub config_hash: String,
    pub workers: usize,
    pub overrides: Vec<String>,
    pub outputs: Vec<String>,
    pub version: String,
    pub status: String,
}

pub const MANIFEST_FILE: &str = "run_manifest.toml";

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))?;
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))
    }
}
