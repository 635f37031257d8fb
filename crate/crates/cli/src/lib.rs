//! Configuration-driven experiment runner for `quasistat`.
//!
//! Each run reads one JSON config, writes CSV and JSON artifacts into an output
//! directory and records them in `manifest.json`.

pub mod config;
pub mod diff;
pub mod error;
pub mod manifest;
pub mod run;

use std::path::{Path, PathBuf};

pub use config::{Experiment, ExperimentConfig};
pub use error::CliError;
pub use manifest::Manifest;

/// Options shared by the experiment subcommands.
#[derive(Debug, Clone, Default)]
pub struct RunRequest {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Loads and validates the config, runs the experiment into a staged directory and
/// publishes it with its manifest. Nothing is left behind on failure.
pub fn execute(exp: Experiment, req: &RunRequest) -> Result<(PathBuf, Manifest), CliError> {
    let cfg = ExperimentConfig::load(&req.config)?;
    if let Some(e) = cfg.experiment {
        if e != exp {
            return Err(CliError::ExperimentMismatch {
                config: e.name().into(),
                command: exp.name().into(),
            });
        }
    }
    let out = req
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .ok_or(CliError::NoOutput)?;
    let seed = req.seed.or(cfg.seed).unwrap_or(0);
    let mut artifacts = manifest::Artifacts::create(&out)?;
    let pool = match req.threads {
        Some(t) if t > 0 => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Config {
                    field: "--threads".into(),
                    message: e.to_string(),
                })?,
        ),
        Some(_) => {
            return Err(CliError::Config {
                field: "--threads".into(),
                message: "must be positive".into(),
            })
        }
        None => None,
    };
    let work = |a: &mut manifest::Artifacts| run::run(exp, &cfg, seed, a);
    match &pool {
        Some(p) => p.install(|| work(&mut artifacts))?,
        None => work(&mut artifacts)?,
    }
    let manifest = artifacts.finish(exp.name(), seed, req.threads, &cfg)?;
    Ok((out, manifest))
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(manifest::MANIFEST_NAME)
}
