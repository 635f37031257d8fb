//! Monte Carlo for the scaled chain `X_{k+1} = X_k + η/N`.

mod probes;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use probes::{
    absorption_probability, boundary_absorption_probe, exp_moment_estimate, expmoment_threshold, BoundaryProbe,
    ExpMomentEstimate, ExpMomentOptions, ProbeStart,
};

use crate::error::{Error, Result};
use crate::flow::Rk4;
use crate::model::{lattice_counts, IncrementSampler, ModelSpec};
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub max_steps: usize,
    /// Store every `thin`-th state (the final state is always stored).
    pub thin: usize,
    /// Stop at the first step with some coordinate at zero.
    pub stop_at_boundary: bool,
}

impl RunOptions {
    pub fn new(max_steps: usize) -> Self {
        Self {
            max_steps,
            thin: 1,
            stop_at_boundary: true,
        }
    }

    pub fn through_boundary(mut self) -> Self {
        self.stop_at_boundary = false;
        self
    }

    pub fn thinned(mut self, thin: usize) -> Self {
        self.thin = thin.max(1);
        self
    }
}

/// A realised trajectory, stored as integer population counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticePath {
    pub n: u64,
    /// Step index of each stored state.
    pub steps: Vec<usize>,
    pub counts: Vec<Vec<u64>>,
    /// First step with some coordinate zero.
    pub extinct_at: Option<usize>,
    /// First step with every coordinate zero.
    pub total_extinct_at: Option<usize>,
    pub key: StreamKey,
}

impl LatticePath {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn state(&self, k: usize) -> Vec<f64> {
        let n = self.n as f64;
        self.counts[k].iter().map(|&c| c as f64 / n).collect()
    }

    pub fn last_step(&self) -> usize {
        *self.steps.last().expect("non-empty path")
    }

    /// Whether steps are missing. The jump to `max_steps` after total extinction
    /// does not count: the state is frozen at zero.
    pub fn is_thinned(&self) -> bool {
        self.contiguous_len().is_none()
    }

    /// Length of the stored prefix with one entry per step, when everything
    /// after it is the frozen post-extinction tail.
    fn contiguous_len(&self) -> Option<usize> {
        let len = self.steps.len();
        let frozen_tail = len >= 2 && self.total_extinct_at == Some(self.steps[len - 2]) && self.steps[len - 1] > self.steps[len - 2];
        let body = if frozen_tail { len - 1 } else { len };
        self.steps[..body].iter().enumerate().all(|(i, &s)| i == s).then_some(body)
    }

    /// CSV with columns `step, x_1..x_d`.
    pub fn to_csv(&self) -> String {
        let d = self.counts.first().map_or(0, |c| c.len());
        let mut out = String::from("step");
        for i in 1..=d {
            out.push_str(&format!(",x_{i}"));
        }
        out.push('\n');
        for (k, &s) in self.steps.iter().enumerate() {
            out.push_str(&s.to_string());
            for v in self.state(k) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

fn at_boundary(counts: &[u64]) -> bool {
    counts.contains(&0)
}

/// Simulates the chain from `x0 ∈ Δ_N` using the stream `key`.
pub fn run_chain(model: &ModelSpec, x0: &[f64], n: u64, opts: &RunOptions, key: StreamKey) -> Result<LatticePath> {
    if x0.len() != model.d() {
        return Err(Error::Domain(format!("start has dimension {}, model has {}", x0.len(), model.d())));
    }
    let mut counts = lattice_counts(x0, n)?;
    let mut rng = key.rng();
    let mut sampler = IncrementSampler::new(model, n);
    let mut eta = vec![0i64; model.d()];
    let thin = opts.thin.max(1);
    let mut path = LatticePath {
        n,
        steps: vec![0],
        counts: vec![counts.clone()],
        extinct_at: at_boundary(&counts).then_some(0),
        total_extinct_at: counts.iter().all(|&c| c == 0).then_some(0),
        key,
    };
    let mut k = 0;
    while k < opts.max_steps && !(opts.stop_at_boundary && path.extinct_at.is_some()) {
        if path.total_extinct_at.is_some() {
            // nothing can move once everyone is gone
            k = opts.max_steps;
            if path.last_step() != k {
                path.steps.push(k);
                path.counts.push(counts.clone());
            }
            break;
        }
        sampler.sample(&counts, &mut rng, &mut eta);
        for i in 0..counts.len() {
            let next = counts[i] as i64 + eta[i];
            debug_assert!(next >= 0, "deaths cannot exceed the population");
            debug_assert!(counts[i] > 0 || eta[i] == 0, "faces are absorbing");
            counts[i] = next as u64;
        }
        k += 1;
        if path.extinct_at.is_none() && at_boundary(&counts) {
            path.extinct_at = Some(k);
        }
        if path.total_extinct_at.is_none() && counts.iter().all(|&c| c == 0) {
            path.total_extinct_at = Some(k);
        }
        let stop = opts.stop_at_boundary && path.extinct_at.is_some();
        if k % thin == 0 || k == opts.max_steps || stop {
            path.steps.push(k);
            path.counts.push(counts.clone());
        }
    }
    Ok(path)
}

/// Piecewise-linear continuous-time extension on the time grid `k/N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolatedPath {
    pub n: u64,
    pub states: Vec<Vec<f64>>,
}

impl InterpolatedPath {
    pub fn horizon(&self) -> f64 {
        (self.states.len() - 1) as f64 / self.n as f64
    }

    pub fn value(&self, t: f64) -> Vec<f64> {
        let s = (t * self.n as f64).clamp(0.0, (self.states.len() - 1) as f64);
        let k = (s.floor() as usize).min(self.states.len().saturating_sub(2));
        if self.states.len() == 1 {
            return self.states[0].clone();
        }
        let w = s - k as f64;
        self.states[k]
            .iter()
            .zip(&self.states[k + 1])
            .map(|(a, b)| a + (b - a) * w)
            .collect()
    }
}

pub fn interpolate(path: &LatticePath) -> Result<InterpolatedPath> {
    let body = path
        .contiguous_len()
        .ok_or_else(|| Error::Precondition("cannot interpolate a thinned path".into()))?;
    let mut states: Vec<Vec<f64>> = (0..body).map(|k| path.state(k)).collect();
    if body < path.len() {
        let zero = path.state(body - 1);
        states.resize(path.last_step() + 1, zero);
    }
    Ok(InterpolatedPath { n: path.n, states })
}

/// `sup_{0≤t≤T} ‖X̂(t) − φ_t(X_0)‖`.
///
/// The flow uses an RK4 step that divides `1/N`, so both paths are linear between
/// points of the flow grid and the sup is attained on it.
pub fn lln_deviation(model: &ModelSpec, path: &InterpolatedPath, t: f64) -> Result<f64> {
    if path.horizon() + 1e-12 < t {
        return Err(Error::Precondition(format!(
            "path covers [0, {}] but T = {t}",
            path.horizon()
        )));
    }
    let n = path.n as f64;
    let sub = ((1.0 / n) / 0.01).ceil().max(1.0) as usize;
    let h = 1.0 / (n * sub as f64);
    let total = (t / h).round() as usize;
    let mut rk = Rk4::new(model);
    let mut x = path.states[0].clone();
    let mut sup: f64 = 0.0;
    for j in 0..=total {
        if j > 0 {
            rk.step(&mut x, h, (j - 1) as f64 * h)?;
        }
        let tj = (j as f64 * h).min(t);
        let k = j / sub;
        let y = if j % sub == 0 { path.states[k].clone() } else { path.value(tj) };
        let dist = crate::grid::distance(&x, &y);
        sup = sup.max(dist);
    }
    Ok(sup)
}

/// `D^N_T` for `reps` independent paths from `x0`, ordered by replicate index.
pub fn lln_deviation_samples(model: &ModelSpec, x0: &[f64], n: u64, t: f64, reps: usize, seed: u64) -> Result<Vec<f64>> {
    let steps = (t * n as f64).ceil() as usize;
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let path = run_chain(model, x0, n, &RunOptions::new(steps).through_boundary(), StreamKey::new(seed, r as u64))?;
            lln_deviation(model, &interpolate(&path)?, t)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HittingTimes {
    /// First step in `K_r = {x interior : x·1 ≤ r}`.
    pub tau_r: Option<usize>,
    pub tau_boundary: Option<usize>,
    pub tau_hat: Option<usize>,
}

fn in_k_r(counts: &[u64], n: u64, r: f64) -> bool {
    !at_boundary(counts) && counts.iter().sum::<u64>() as f64 <= r * n as f64 + 1e-9
}

/// Hitting times read off a stored path; `None` means not hit within the path.
pub fn hitting_times(path: &LatticePath, r: f64) -> Result<HittingTimes> {
    if !(r > 0.0) {
        return Err(Error::Precondition(format!("r must be positive, got {r}")));
    }
    if path.is_thinned() {
        return Err(Error::Precondition("hitting times need an unthinned path".into()));
    }
    let tau_r = path.counts.iter().position(|c| in_k_r(c, path.n, r));
    let tau_boundary = path.extinct_at;
    let tau_hat = match (tau_r, tau_boundary) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    Ok(HittingTimes {
        tau_r,
        tau_boundary,
        tau_hat,
    })
}

/// `τ̂_r` simulated without storing the path; `None` if it exceeds `max_steps`.
pub fn first_exit_time(
    model: &ModelSpec,
    x0: &[f64],
    n: u64,
    r: f64,
    max_steps: usize,
    key: StreamKey,
) -> Result<Option<usize>> {
    let mut counts = lattice_counts(x0, n)?;
    let mut rng = key.rng();
    let mut sampler = IncrementSampler::new(model, n);
    let mut eta = vec![0i64; model.d()];
    for k in 0..=max_steps {
        if at_boundary(&counts) || in_k_r(&counts, n, r) {
            return Ok(Some(k));
        }
        if k == max_steps {
            break;
        }
        sampler.sample(&counts, &mut rng, &mut eta);
        for i in 0..counts.len() {
            counts[i] = (counts[i] as i64 + eta[i]) as u64;
        }
    }
    Ok(None)
}

/// Fraction of `reps` paths from `x0` that hit the boundary within `steps`.
pub fn extinction_probability(model: &ModelSpec, x0: &[f64], n: u64, steps: usize, reps: usize, seed: u64) -> Result<f64> {
    let hits: Vec<bool> = (0..reps)
        .into_par_iter()
        .map(|r| {
            run_chain(model, x0, n, &RunOptions::new(steps).thinned(steps.max(1)), StreamKey::new(seed, r as u64))
                .map(|p| p.extinct_at.is_some())
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|h| **h).count() as f64 / reps.max(1) as f64)
}
