use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Provenance of one command run. Timings vary between runs; every other
/// field, together with the inputs it digests, determines the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    /// Input path (as configured) to SHA-256.
    pub input_digests: BTreeMap<String, String>,
    pub rng_seeds: Vec<u64>,
    pub software_version: String,
    pub timings_ms: BTreeMap<String, f64>,
    /// Output file name to SHA-256.
    pub output_digests: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub statistics: serde_json::Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String) -> Self {
        Self {
            command: command.to_string(),
            config_hash,
            input_digests: BTreeMap::new(),
            rng_seeds: Vec::new(),
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            timings_ms: BTreeMap::new(),
            output_digests: BTreeMap::new(),
            statistics: serde_json::Value::Null,
            diagnostics: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.input_digests
            .insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
