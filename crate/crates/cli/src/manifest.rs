//! Run manifests: what a command read and wrote, with content digests,
//! so a run can be checked and repeated.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn unix_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub wall_clock_secs: f64,
    /// The effective configuration, as TOML.
    pub config: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub counts: BTreeMap<String, usize>,
    pub notes: Vec<String>,
}

/// Collects manifest entries while a command runs.
pub struct Recorder {
    manifest: Manifest,
    root: PathBuf,
    started: Instant,
}

impl Recorder {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            manifest: Manifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed: cfg.seed,
                started_unix: unix_secs(),
                finished_unix: 0,
                wall_clock_secs: 0.0,
                config: cfg.to_toml(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                counts: BTreeMap::new(),
                notes: Vec::new(),
            },
            root: cfg.paths.out.clone(),
            started: Instant::now(),
        }
    }

    fn key(&self, path: &Path) -> String {
        path.strip_prefix(&self.root).unwrap_or(path).display().to_string()
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let digest = sha256_file(path)?;
        self.manifest.inputs.insert(self.key(path), digest);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<(), CliError> {
        let digest = sha256_file(path)?;
        self.manifest.outputs.insert(self.key(path), digest);
        Ok(())
    }

    pub fn count(&mut self, name: &str, n: usize) {
        self.manifest.counts.insert(name.to_string(), n);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.manifest.notes.push(text.into());
    }

    /// Writes `<out>/manifests/<command>.json`.
    pub fn finish(mut self) -> Result<Manifest, CliError> {
        self.manifest.finished_unix = unix_secs();
        self.manifest.wall_clock_secs = self.started.elapsed().as_secs_f64();
        let dir = self.root.join("manifests");
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let path = dir.join(format!("{}.json", self.manifest.command));
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(self.manifest)
    }
}
