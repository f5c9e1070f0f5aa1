use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    /// Hash of the configuration, the stage name and the upstream outputs.
    pub key: String,
    pub outputs: Vec<OutputRecord>,
    /// Time spent when the stage was last computed.
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub versions: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    /// Set when the run stopped on an error.
    pub failed_stage: Option<String>,
}

impl RunManifest {
    pub fn new(config_hash: String) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("filtergen".into(), env!("CARGO_PKG_VERSION").into());
        versions.insert(
            "checkpoint_format".into(),
            filtergen::checkpoint::FORMAT_VERSION.to_string(),
        );
        RunManifest {
            config_hash,
            versions,
            stages: Vec::new(),
            failed_stage: None,
        }
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn load(dir: &Path) -> Option<RunManifest> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn save(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self).map_err(filtergen::Error::from)?;
        std::fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))
    }
}
