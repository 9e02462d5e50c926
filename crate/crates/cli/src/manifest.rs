//! Run manifests: what a command read, what it wrote, and the config it ran
//! under. A stage whose manifest still matches is skipped on rerun.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use riskfuse_core::fingerprint::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    /// Path (relative to the output directory when inside it) to SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub upstream_calls: usize,
    pub timestamp_unix: u64,
}

pub fn manifest_path(out_dir: &Path, command: &str) -> PathBuf {
    out_dir.join("manifests").join(format!("{command}.json"))
}

pub fn file_fingerprint(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Hash of any serializable config fragment.
pub fn config_hash<T: Serialize>(section: &T) -> String {
    let json = serde_json::to_vec(section).expect("config serializes");
    sha256_hex(&json)
}

pub fn display_path(out_dir: &Path, path: &Path) -> String {
    path.strip_prefix(out_dir).unwrap_or(path).display().to_string()
}

pub(crate) fn fingerprints(out_dir: &Path, paths: &[PathBuf]) -> Result<BTreeMap<String, String>, CliError> {
    paths
        .iter()
        .map(|p| Ok((display_path(out_dir, p), file_fingerprint(p)?)))
        .collect()
}

impl Manifest {
    pub fn load(path: &Path) -> Option<Self> {
        let text = std::fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn now() -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
    }

    /// True when the recorded config hash and every recorded input and output
    /// fingerprint still match the files on disk.
    pub fn is_fresh(&self, config_hash: &str, out_dir: &Path, inputs: &[PathBuf], outputs: &[PathBuf]) -> bool {
        if self.config_hash != config_hash {
            return false;
        }
        let matches = |recorded: &BTreeMap<String, String>, paths: &[PathBuf]| {
            recorded.len() == paths.len()
                && paths.iter().all(|p| {
                    recorded
                        .get(&display_path(out_dir, p))
                        .is_some_and(|fp| file_fingerprint(p).is_ok_and(|now| &now == fp))
                })
        };
        matches(&self.inputs, inputs) && matches(&self.outputs, outputs)
    }
}
