//! `run.json`: what was run, with which inputs, and what it wrote.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OutputFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunRecord {
    pub command: String,
    pub config_hash: String,
    pub toolkit_version: String,
    pub timestamp: String,
    pub seed: Option<u64>,
    pub outputs: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunRecord {
    pub fn new(command: &str, config_source: &[u8], seed: Option<u64>) -> Self {
        RunRecord {
            command: command.to_string(),
            config_hash: sha256_hex(config_source),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            seed,
            outputs: Vec::new(),
        }
    }

    pub fn add_outputs(&mut self, files: &[PathBuf]) -> Result<(), CliError> {
        for f in files {
            let bytes = std::fs::read(f).map_err(|e| CliError::Io(format!("{}: {e}", f.display())))?;
            self.outputs.push(OutputFile {
                path: f.clone(),
                sha256: sha256_hex(&bytes),
            });
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("run.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
