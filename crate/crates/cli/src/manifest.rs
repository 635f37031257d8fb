//! Run manifests and the staged output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    /// Produced by Monte Carlo and so dependent on the seed.
    pub stochastic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub versions: Versions,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub quasistat: String,
    pub cli: String,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let path = if path.is_dir() { path.join(MANIFEST_NAME) } else { path.to_path_buf() };
        let text = fs::read_to_string(&path).map_err(|e| CliError::Io { path: path.clone(), source: e })?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Schema(format!("{} is not a run manifest: {e}", path.display())))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(CliError::Schema(format!(
                "{} has schema version {}, expected {SCHEMA_VERSION}",
                path.display(),
                m.schema_version
            )));
        }
        Ok(m)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects outputs in a staging directory beside the target and moves it into
/// place only when the run succeeds; dropping it unfinished removes everything.
pub struct Artifacts {
    target: PathBuf,
    staging: PathBuf,
    files: Vec<FileEntry>,
    finished: bool,
}

impl Artifacts {
    pub fn create(target: &Path) -> Result<Self, CliError> {
        if target.exists() {
            let empty = target.is_dir()
                && fs::read_dir(target)
                    .map_err(|e| CliError::Io { path: target.to_path_buf(), source: e })?
                    .next()
                    .is_none();
            if !empty {
                return Err(CliError::OutputExists(target.to_path_buf()));
            }
        }
        let name = target.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
        let staging = target.with_file_name(format!(".{name}.partial-{}", std::process::id()));
        fs::create_dir_all(&staging).map_err(|e| CliError::Io { path: staging.clone(), source: e })?;
        Ok(Self {
            target: target.to_path_buf(),
            staging,
            files: Vec::new(),
            finished: false,
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8], stochastic: bool) -> Result<(), CliError> {
        let path = self.staging.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Io { path, source: e })?;
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
            stochastic,
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T, stochastic: bool) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes(), stochastic)
    }

    /// Writes the manifest and moves the staged directory to the target.
    pub fn finish(
        mut self,
        experiment: &str,
        seed: u64,
        threads: Option<usize>,
        config: &ExperimentConfig,
    ) -> Result<Manifest, CliError> {
        let canonical = serde_json::to_vec(config)?;
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            seed,
            threads,
            config_sha256: sha256_hex(&canonical),
            config: config.clone(),
            versions: Versions {
                quasistat: quasistat::VERSION.to_string(),
                cli: env!("CARGO_PKG_VERSION").to_string(),
            },
            files: std::mem::take(&mut self.files),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.staging.join(MANIFEST_NAME);
        fs::write(&path, text).map_err(|e| CliError::Io { path, source: e })?;
        if self.target.exists() {
            fs::remove_dir(&self.target).map_err(|e| CliError::Io { path: self.target.clone(), source: e })?;
        }
        fs::rename(&self.staging, &self.target).map_err(|e| CliError::Io { path: self.target.clone(), source: e })?;
        self.finished = true;
        Ok(manifest)
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if !self.finished {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}
