//! Output manifests: content hashes of every artifact for byte-level
//! reproducibility checks (no timestamps, so reruns are identical).

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub files: Vec<ManifestFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn new(command: &str, config_path: &Path) -> anyhow::Result<Self> {
        let config_bytes = std::fs::read(config_path)?;
        Ok(Self {
            command: command.to_string(),
            config_sha256: sha256_hex(&config_bytes),
            files: Vec::new(),
        })
    }

    /// Hash an artifact and record it (paths stored relative to the output
    /// directory).
    pub fn add(&mut self, out_dir: &Path, path: &PathBuf) -> anyhow::Result<()> {
        let bytes = std::fs::read(path)?;
        let rel = path
            .strip_prefix(out_dir)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned();
        self.files.push(ManifestFile {
            path: rel,
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}
