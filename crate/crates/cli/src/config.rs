//! Experiment configuration files.

use std::path::{Path, PathBuf};

use quasistat::grid::BoxRegion;
use quasistat::qsd::RedirectPolicy;
use quasistat::ModelSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Validate,
    Simulate,
    Qsd,
    Flow,
    Quasipotential,
    Scaling,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Validate => "validate",
            Experiment::Simulate => "simulate",
            Experiment::Qsd => "qsd",
            Experiment::Flow => "flow",
            Experiment::Quasipotential => "quasipotential",
            Experiment::Scaling => "scaling",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub scale: ScaleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleConfig {
    /// System sizes.
    pub n: Vec<u64>,
    /// Truncation radius of the QSD kernels.
    pub r: f64,
    pub policy: RedirectPolicy,
    pub max_states: usize,
    /// Box for validation, recurrence and quasipotential grids; `[0, r]^d` when absent.
    pub region: Option<BoxRegion>,
    pub grid_step: f64,
    pub delta: f64,
    pub flight_time: f64,
    pub flow_step: f64,
    /// Flow duration; simulation horizon in model time.
    pub horizon: f64,
    /// Start point of simulations and flows, source of the quasipotential; all ones when absent.
    pub x0: Option<Vec<f64>>,
    pub replicates: usize,
    pub eps_v: f64,
    pub concentration_eps: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        Self {
            n: vec![10],
            r: 5.0,
            policy: RedirectPolicy::Absorb,
            max_states: 200_000,
            region: None,
            grid_step: 0.05,
            delta: 0.06,
            flight_time: 2.0,
            flow_step: 0.01,
            horizon: 5.0,
            x0: None,
            replicates: 100,
            eps_v: 1e-3,
            concentration_eps: 0.2,
            tolerance: 1e-12,
            max_iterations: 1_000_000,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn region(&self) -> BoxRegion {
        self.scale
            .region
            .clone()
            .unwrap_or_else(|| BoxRegion::cube(self.model.d(), 0.0, self.scale.r))
    }

    pub fn x0(&self) -> Vec<f64> {
        self.scale.x0.clone().unwrap_or_else(|| vec![1.0; self.model.d()])
    }

    /// Checks every numeric field before anything runs.
    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.scale;
        let d = self.model.d();
        let bad = |field: &str, message: String| {
            Err(CliError::Config {
                field: field.to_string(),
                message,
            })
        };
        if s.n.is_empty() {
            return bad("scale.n", "at least one system size is required".into());
        }
        for (i, &n) in s.n.iter().enumerate() {
            if n < 2 {
                return bad(&format!("scale.n[{i}]"), format!("system size must be at least 2, got {n}"));
            }
        }
        let positive = [
            ("scale.r", s.r),
            ("scale.grid_step", s.grid_step),
            ("scale.delta", s.delta),
            ("scale.flight_time", s.flight_time),
            ("scale.flow_step", s.flow_step),
            ("scale.horizon", s.horizon),
            ("scale.eps_v", s.eps_v),
            ("scale.concentration_eps", s.concentration_eps),
            ("scale.tolerance", s.tolerance),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(field, format!("must be a positive finite number, got {v}"));
            }
        }
        if s.replicates == 0 {
            return bad("scale.replicates", "must be positive".into());
        }
        if s.max_iterations == 0 {
            return bad("scale.max_iterations", "must be positive".into());
        }
        if s.max_states == 0 {
            return bad("scale.max_states", "must be positive".into());
        }
        if let Some(region) = &s.region {
            if region.dim() != d || region.upper.len() != d {
                return bad("scale.region", format!("box must have dimension {d}"));
            }
            for k in 0..d {
                if !(region.lower[k] >= 0.0 && region.upper[k] > region.lower[k]) {
                    return bad(&format!("scale.region.upper[{k}]"), "need 0 <= lower < upper".into());
                }
            }
        }
        if let Some(x0) = &s.x0 {
            if x0.len() != d {
                return bad("scale.x0", format!("start point must have {d} coordinates"));
            }
            for (k, v) in x0.iter().enumerate() {
                if !(v.is_finite() && *v >= 0.0) {
                    return bad(&format!("scale.x0[{k}]"), format!("coordinates must be non-negative, got {v}"));
                }
            }
        }
        Ok(())
    }
}
