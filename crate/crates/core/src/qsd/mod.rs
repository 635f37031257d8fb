//! Quasi-stationary distributions of truncated kernels, with survival-rate,
//! Foster-criterion and concentration diagnostics.

mod extinction;
mod fleming_viot;
mod foster;
mod kernel;

use serde::{Deserialize, Serialize};

pub use extinction::{extinction_law_test, ExtinctionLawReport};
pub use fleming_viot::{fleming_viot_estimate, FlemingViotEstimate, FlemingViotOptions};
pub use foster::{foster_check, foster_search, FosterReport};
pub use kernel::{KernelOptions, RedirectPolicy, TruncatedKernel};

use crate::error::{Error, Result};
use crate::flow::RecurrenceReport;
use crate::grid::distance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QsdEstimate {
    pub n: u64,
    pub states: Vec<Vec<u64>>,
    pub mu: Vec<f64>,
    pub per_step_survival: f64,
    /// `1 − per_step_survival`, summed directly from the killed mass.
    pub per_step_deficit: f64,
    pub lambda_n: f64,
    pub one_minus_lambda: f64,
    pub residual_tv: f64,
    pub iterations: usize,
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn normalise(v: &mut [f64]) -> f64 {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
    s
}

/// Killed mass `Σ ν_i (absorbed_i + leak_i)`; avoids the cancellation in `1 − ‖νP‖₁`.
fn deficit(kernel: &TruncatedKernel, nu: &[f64]) -> f64 {
    nu.iter().enumerate().map(|(i, w)| w * kernel.killed(i)).sum()
}

/// `TV(μ, μP/‖μP‖₁)`.
pub fn qsd_residual(mu: &[f64], kernel: &TruncatedKernel) -> f64 {
    let mut image = vec![0.0; kernel.len()];
    kernel.left_multiply(mu, &mut image);
    if normalise(&mut image) == 0.0 {
        return 1.0;
    }
    total_variation(mu, &image)
}

/// Normalised power iteration `ν ← νP/‖νP‖₁` until successive iterates are within `tol` in TV.
pub fn conditioned_power_iteration(
    kernel: &TruncatedKernel,
    nu0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<QsdEstimate> {
    if nu0.len() != kernel.len() {
        return Err(Error::Precondition(format!(
            "initial vector has {} entries, kernel has {} states",
            nu0.len(),
            kernel.len()
        )));
    }
    if nu0.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::Precondition("initial vector must be non-negative".into()));
    }
    let mut nu = nu0.to_vec();
    if normalise(&mut nu) == 0.0 {
        return Err(Error::Precondition("initial vector has zero mass".into()));
    }
    let mut next = vec![0.0; kernel.len()];
    let mut change = f64::INFINITY;
    for it in 1..=max_iter {
        kernel.left_multiply(&nu, &mut next);
        let mass = normalise(&mut next);
        if !(mass > f64::MIN_POSITIVE) {
            return Err(Error::MassUnderflow { iteration: it });
        }
        change = total_variation(&nu, &next);
        std::mem::swap(&mut nu, &mut next);
        if change < tol {
            return Ok(finish(kernel, nu, it));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: change,
    })
}

fn finish(kernel: &TruncatedKernel, mu: Vec<f64>, iterations: usize) -> QsdEstimate {
    let def = deficit(kernel, &mu);
    let n = kernel.n as f64;
    let log_lambda = n * (-def).ln_1p();
    QsdEstimate {
        n: kernel.n,
        states: kernel.states.clone(),
        residual_tv: qsd_residual(&mu, kernel),
        per_step_survival: 1.0 - def,
        per_step_deficit: def,
        lambda_n: log_lambda.exp(),
        one_minus_lambda: -log_lambda.exp_m1(),
        mu,
        iterations,
    }
}

/// Uniform start over all states.
pub fn uniform_start(kernel: &TruncatedKernel) -> Vec<f64> {
    vec![1.0 / kernel.len() as f64; kernel.len()]
}

/// Point mass at state `i`.
pub fn point_start(kernel: &TruncatedKernel, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; kernel.len()];
    v[i] = 1.0;
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRate {
    pub lambda_n: f64,
    pub one_minus_lambda: f64,
    /// `−(1/N) ln(1 − λ_N)`; a lower bound for the exponential rate `c` in `λ_N ≥ 1 − e^{−cN}`.
    pub rate: f64,
}

pub fn survival_rate(per_step_survival: f64, n: u64) -> SurvivalRate {
    let log_lambda = n as f64 * (per_step_survival - 1.0).ln_1p();
    let one_minus = -log_lambda.exp_m1();
    SurvivalRate {
        lambda_n: log_lambda.exp(),
        one_minus_lambda: one_minus,
        rate: -one_minus.ln() / n as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationTable {
    pub eps: f64,
    /// Mass within `eps` of each class, in report order.
    pub class_mass: Vec<f64>,
    pub quasiattractor: Vec<bool>,
    /// Mass not within `eps` of any class.
    pub complement: f64,
}

/// μ-mass of the `eps`-neighbourhood of each recurrence class.
pub fn support_concentration(
    kernel: &TruncatedKernel,
    mu: &[f64],
    report: &RecurrenceReport,
    eps: f64,
) -> ConcentrationTable {
    let tol = eps.max(1e-12);
    let mut class_mass = vec![0.0; report.classes.len()];
    let mut complement = 0.0;
    for (i, &w) in mu.iter().enumerate() {
        let x = kernel.point(i);
        let mut inside = false;
        for (c, class) in report.classes.iter().enumerate() {
            if class.points.iter().any(|p| distance(p, &x) <= tol) {
                class_mass[c] += w;
                inside = true;
            }
        }
        if !inside {
            complement += w;
        }
    }
    ConcentrationTable {
        eps,
        class_mass,
        quasiattractor: report.classes.iter().map(|c| c.quasiattractor).collect(),
        complement,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessTable {
    pub radii: Vec<f64>,
    /// `tail[k][j] = μ_{N_k}({x·1 > radii[j]})`.
    pub tail: Vec<Vec<f64>>,
    pub ns: Vec<u64>,
    /// `sup_N` of the tail at each radius.
    pub sup_tail: Vec<f64>,
    pub decreasing_in_r: bool,
}

pub fn tightness_diagnostic(estimates: &[QsdEstimate], radii: &[f64]) -> TightnessTable {
    let tail: Vec<Vec<f64>> = estimates
        .iter()
        .map(|e| {
            radii
                .iter()
                .map(|&r| {
                    e.states
                        .iter()
                        .zip(&e.mu)
                        .filter(|(s, _)| s.iter().sum::<u64>() as f64 > r * e.n as f64 + 1e-9)
                        .map(|(_, w)| w)
                        .sum()
                })
                .collect()
        })
        .collect();
    let sup_tail: Vec<f64> = (0..radii.len()).map(|j| tail.iter().map(|t| t[j]).fold(0.0, f64::max)).collect();
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]));
    let decreasing_in_r = order.windows(2).all(|w| sup_tail[w[1]] <= sup_tail[w[0]] + 1e-15);
    TightnessTable {
        radii: radii.to_vec(),
        tail,
        ns: estimates.iter().map(|e| e.n).collect(),
        sup_tail,
        decreasing_in_r,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::shipped;

    fn bh(n: u64) -> TruncatedKernel {
        TruncatedKernel::build(&shipped::beverton_holt_1d(), n, 5.0, &KernelOptions::default()).unwrap()
    }

    #[test]
    fn fixed_point_and_start_independence() {
        let k = bh(10);
        let a = conditioned_power_iteration(&k, &uniform_start(&k), 1e-13, 100_000).unwrap();
        let b = conditioned_power_iteration(&k, &point_start(&k, 40), 1e-13, 100_000).unwrap();
        assert!(a.residual_tv < 1e-10);
        assert!(total_variation(&a.mu, &b.mu) < 1e-8);
        assert!((a.mu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((a.lambda_n - a.per_step_survival.powi(10)).abs() < 1e-12);
        assert!(qsd_residual(&uniform_start(&k), &k) > 0.01);
    }

    #[test]
    fn survival_rate_examples() {
        assert_eq!(survival_rate(1.0, 10).lambda_n, 1.0);
        let s = survival_rate(1.0 - 1e-3, 100);
        assert!((s.lambda_n - 0.999f64.powi(100)).abs() < 1e-12);
        assert!((s.lambda_n - 0.9048).abs() < 1e-4);
    }

    #[test]
    fn tightness_edges() {
        let k = bh(10);
        let e = conditioned_power_iteration(&k, &uniform_start(&k), 1e-12, 100_000).unwrap();
        let t = tightness_diagnostic(&[e], &[0.0, 3.0, 5.0]);
        assert!((t.sup_tail[0] - 1.0).abs() < 1e-12);
        assert_eq!(t.sup_tail[2], 0.0);
        assert!(t.sup_tail[1] < 0.05);
        assert!(t.decreasing_in_r);
    }

    #[test]
    fn bad_inputs() {
        let k = bh(5);
        assert!(conditioned_power_iteration(&k, &[1.0], 1e-10, 10).is_err());
        assert!(matches!(
            conditioned_power_iteration(&k, &uniform_start(&k), 1e-300, 3),
            Err(Error::NonConvergence { .. })
        ));
    }
}
