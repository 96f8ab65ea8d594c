//! Run manifest: what a command read, wrote, and under which settings.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rrae::io::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the run directory.
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
    /// False for files holding wall-clock measurements.
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Host {
    pub os: String,
    pub arch: String,
    pub cpus: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    /// Restart seeds; each drives initialization and batch shuffling.
    pub train: Vec<u64>,
    /// Per-dimension seeds of the test parameters.
    pub data: Vec<u64>,
    pub interpolation: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub library_version: String,
    pub config: Option<serde_json::Value>,
    pub seeds: Seeds,
    pub threads: usize,
    pub wall_clock_s: f64,
    pub host: Host,
    pub outputs: Vec<OutputFile>,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let digest = Sha256::digest(&bytes);
    Ok((digest.iter().map(|b| format!("{b:02x}")).collect(), bytes.len() as u64))
}

pub fn host() -> Host {
    Host {
        os: std::env::consts::OS.to_string(),
        arch: std::env::consts::ARCH.to_string(),
        cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
    }
}

/// Files written by one command, relative to the run directory.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, bool)>,
}

impl Outputs {
    pub fn add(&mut self, rel: impl Into<PathBuf>) {
        self.files.push((rel.into(), true));
    }

    pub fn add_timing(&mut self, rel: impl Into<PathBuf>) {
        self.files.push((rel.into(), false));
    }

    /// Hashes every listed file; fails if one is missing.
    pub fn inventory(&self, dir: &Path) -> Result<Vec<OutputFile>> {
        self.files
            .iter()
            .map(|(rel, deterministic)| {
                let (sha256, bytes) = sha256_file(&dir.join(rel))?;
                Ok(OutputFile { path: rel.clone(), sha256, bytes, deterministic: *deterministic })
            })
            .collect()
    }
}

pub fn manifest_name(command: &str) -> String {
    format!("{command}.manifest.json")
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    let path = dir.join(manifest_name(&manifest.command));
    write_atomic(&path, &serde_json::to_vec_pretty(manifest)?)?;
    Ok(path)
}
