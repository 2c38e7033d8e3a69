//! Run manifests: the resolved configuration plus checksums of every emitted
//! file, written last into the output directory.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Override, Settings};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: ExperimentConfig,
    pub file_settings: Settings,
    pub flag_settings: Settings,
    pub overrides: Vec<Override>,
    pub seed: u64,
    pub threads: usize,
    pub started: String,
    pub finished: String,
    pub exit_code: i32,
    pub property_failures: Vec<String>,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Checksums of the named files under `out`, sorted by name.
pub fn collect_artifacts(out: &Path, names: &[String]) -> Result<Vec<Artifact>> {
    let mut names = names.to_vec();
    names.sort();
    names.dedup();
    names
        .into_iter()
        .map(|name| {
            let path = out.join(&name);
            let bytes = std::fs::metadata(&path).with_context(|| format!("stat {}", path.display()))?.len();
            Ok(Artifact { sha256: sha256_file(&path)?, path: name, bytes })
        })
        .collect()
}

impl RunManifest {
    pub fn write(&self, out: &Path) -> Result<()> {
        let path = out.join(MANIFEST_NAME);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}
