//! Run manifests: the full configuration snapshot of a command, the files
//! it produced, and timings. A manifest is sufficient to reproduce the run
//! bit-exactly via `rerun`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    /// The exact command, re-executable as parsed arguments.
    pub command: crate::Command,
    pub seed: u64,
    /// SHA-256 of the primary dataset involved (input or generated).
    pub dataset_hash: Option<String>,
    pub outputs: Vec<PathBuf>,
    pub timings_ms: BTreeMap<String, u128>,
}

impl RunManifest {
    pub fn new(command: crate::Command, seed: u64) -> Self {
        Self {
            version: MANIFEST_VERSION,
            command,
            seed,
            dataset_hash: None,
            outputs: Vec::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn record_timing(&mut self, phase: &str, elapsed: std::time::Duration) {
        self.timings_ms.insert(phase.into(), elapsed.as_millis());
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn file_sha256(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Manifest path convention: alongside the primary output.
pub fn manifest_path(primary_output: &Path) -> PathBuf {
    let mut name = primary_output
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    name.push_str(".manifest.json");
    primary_output.with_file_name(name)
}
