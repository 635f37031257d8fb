//! Exponential-moment and boundary-absorption probes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{first_exit_time, run_chain, RunOptions};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::rng::StreamKey;

/// Radius `r_0 = λ/ς + ϑ` above which the exponential-moment bound is guaranteed,
/// with `ϑ = 2 a d e² / (e − 1)`, `ς = (1 − e^{−1})/2` and `a = max_i ‖F_i‖_∞`.
pub fn expmoment_threshold(model: &ModelSpec, lambda: f64) -> f64 {
    let e = std::f64::consts::E;
    let a = model.birth_max_bound();
    let vartheta = 2.0 * a * model.d() as f64 * e * e / (e - 1.0);
    let varsigma = 0.5 * (1.0 - 1.0 / e);
    lambda / varsigma + vartheta
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentOptions {
    pub reps: usize,
    /// Paths not absorbed by then are censored at this step.
    pub max_steps: usize,
    /// Diagnostic constant `c` in the bound `e^{x·1} c`.
    pub c_bound: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub censored: usize,
    pub r0: f64,
    pub bound: f64,
    /// The CI lies entirely above `e^{x·1} c`.
    pub exceeds_bound: bool,
    pub warnings: Vec<String>,
}

/// Monte Carlo estimate of `E_x[exp((λ/N) τ̂_r)]` with a 95% normal interval.
pub fn exp_moment_estimate(
    model: &ModelSpec,
    x0: &[f64],
    n: u64,
    lambda: f64,
    r: f64,
    opts: &ExpMomentOptions,
) -> Result<ExpMomentEstimate> {
    if !(lambda >= 0.0) || !(r > 0.0) || opts.reps < 2 {
        return Err(Error::Precondition("need lambda >= 0, r > 0 and at least two replicates".into()));
    }
    let times: Vec<(usize, bool)> = (0..opts.reps)
        .into_par_iter()
        .map(|k| {
            first_exit_time(model, x0, n, r, opts.max_steps, StreamKey::new(opts.seed, k as u64))
                .map(|t| t.map_or((opts.max_steps, true), |t| (t, false)))
        })
        .collect::<Result<_>>()?;
    let scale = lambda / n as f64;
    let values: Vec<f64> = times.iter().map(|(t, _)| (scale * *t as f64).exp()).collect();
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    let se = (var / m).sqrt();
    let (lo, hi) = (mean - 1.96 * se, mean + 1.96 * se);
    let censored = times.iter().filter(|(_, c)| *c).count();
    let r0 = expmoment_threshold(model, lambda);
    let bound = x0.iter().sum::<f64>().exp() * opts.c_bound;
    let mut warnings = Vec::new();
    if mean > 0.0 && (hi - lo) / mean > 0.2 {
        warnings.push(format!("undersampled: relative CI width {:.3}", (hi - lo) / mean));
    }
    if censored > 0 {
        warnings.push(format!("{censored} paths censored at step {}; estimate is a lower bound", opts.max_steps));
    }
    if r < r0 {
        warnings.push(format!("r = {r} is below the guaranteed threshold r0 = {r0:.3}"));
    }
    Ok(ExpMomentEstimate {
        mean,
        std_error: se,
        ci_low: lo,
        ci_high: hi,
        censored,
        r0,
        bound,
        exceeds_bound: lo > bound,
        warnings,
    })
}

/// Fraction of `samples` paths from `x` absorbed in `∂Δ` within `steps`.
pub fn absorption_probability(
    model: &ModelSpec,
    x: &[f64],
    n: u64,
    steps: usize,
    samples: usize,
    seed: u64,
) -> Result<(usize, f64)> {
    let hits: Vec<bool> = (0..samples)
        .into_par_iter()
        .map(|k| {
            run_chain(model, x, n, &RunOptions::new(steps).thinned(steps.max(1)), StreamKey::new(seed, k as u64))
                .map(|p| p.extinct_at.is_some())
        })
        .collect::<Result<_>>()?;
    let count = hits.iter().filter(|h| **h).count();
    Ok((count, count as f64 / samples.max(1) as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeStart {
    pub face: usize,
    pub x: Vec<f64>,
    pub hits: usize,
    pub probability: f64,
    /// `(1/N) log p`, absent when no path was absorbed.
    pub log_rate: Option<f64>,
    pub meets_bound: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryProbe {
    pub n: u64,
    pub horizon: u32,
    pub gamma: f64,
    pub delta0: f64,
    pub delta1: f64,
    pub delta: f64,
    pub starts: Vec<ProbeStart>,
    pub zero_count_warning: bool,
}

/// Largest `δ ≤ 1` (by bisection) with `F_i(y) < γ/(2T)` whenever `y_i ≤ δ`.
///
/// Other coordinates are sampled on `[0, 2‖F‖∞]`, where the flow eventually lives.
fn boundary_delta0(model: &ModelSpec, target: f64) -> f64 {
    let d = model.d();
    let reach = (2.0 * model.birth_norm_bound()).max(1.0);
    let per_axis = if d == 1 { 1 } else { (4096f64.powf(1.0 / (d - 1) as f64)).floor().max(2.0) as usize };
    let others: Vec<Vec<f64>> = (0..per_axis.pow((d - 1) as u32))
        .map(|mut k| {
            (0..d - 1)
                .map(|_| {
                    let j = k % per_axis;
                    k /= per_axis;
                    if per_axis == 1 { 0.0 } else { reach * j as f64 / (per_axis - 1) as f64 }
                })
                .collect()
        })
        .collect();
    let sup_near = |delta: f64| -> f64 {
        let mut sup: f64 = 0.0;
        let mut y = vec![0.0; d];
        for i in 0..d {
            for o in &others {
                let mut it = o.iter();
                for (j, slot) in y.iter_mut().enumerate() {
                    if j != i {
                        *slot = *it.next().unwrap();
                    }
                }
                for s in 1..=16 {
                    y[i] = delta * s as f64 / 16.0;
                    sup = sup.max(model.birth(&y)[i]);
                }
            }
        }
        sup
    };
    if sup_near(1.0) < target {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if sup_near(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Estimates `P_x(X̂(T) ∈ ∂Δ)` from starts at distance `δ(γ)` from each face.
///
/// `δ = min(δ0, δ1)` with `δ1 = γ / (2(T − ln(e^T − 1)))` and `δ0` such that the birth
/// rate toward the nearest face stays below `γ/(2T)` in the `δ0`-strip. The start for
/// face `i` has `x_i` equal to `δ` rounded down to `Δ_N` (at least `1/N`) and all other
/// coordinates 1.
pub fn boundary_absorption_probe(
    model: &ModelSpec,
    n: u64,
    horizon: u32,
    gamma: f64,
    samples: usize,
    seed: u64,
) -> Result<BoundaryProbe> {
    if horizon == 0 || !(gamma > 0.0) || n == 0 {
        return Err(Error::Precondition("need T >= 1, gamma > 0 and N >= 1".into()));
    }
    let t = horizon as f64;
    let delta1 = gamma / (2.0 * (t - t.exp_m1().ln()));
    let delta0 = boundary_delta0(model, gamma / (2.0 * t));
    let delta = delta0.min(delta1);
    let steps = n as usize * horizon as usize;
    let inv = 1.0 / n as f64;
    let mut starts = Vec::new();
    for face in 0..model.d() {
        let mut x = vec![1.0; model.d()];
        x[face] = ((delta * n as f64).floor() * inv).max(inv);
        let (hits, p) = absorption_probability(model, &x, n, steps, samples, StreamKey::new(seed, face as u64).derive(0xb0).seed)?;
        let log_rate = (hits > 0).then(|| p.ln() / n as f64);
        starts.push(ProbeStart {
            face,
            x,
            hits,
            probability: p,
            log_rate,
            meets_bound: log_rate.map(|l| l >= -gamma),
        });
    }
    let zero_count_warning = starts.iter().any(|s| s.hits == 0);
    Ok(BoundaryProbe {
        n,
        horizon,
        gamma,
        delta0,
        delta1,
        delta,
        starts,
        zero_count_warning,
    })
}
