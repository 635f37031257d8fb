//! Exact verification of the Foster–Lyapunov conditions on a truncated kernel.
//!
//! `φ1(x) = E_x[θ1^{−τ̂_r}]` solves a linear first-passage system outside `K_r`;
//! `φ2 = 1_K`. Mass killed by the kernel (absorption, unredirected overflow) ends
//! the excursion, so it counts as `τ̂_r = 1`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::TruncatedKernel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FosterReport {
    pub theta1: f64,
    pub theta2: f64,
    /// `K = {x·1 ≤ k_radius}`.
    pub k_radius: f64,
    /// Radius of the target set in `τ̂_r`.
    pub r: f64,
    /// `min_{x∈K} P(x → K)`.
    pub realized_theta2: f64,
    /// `min_{x,y∈K} P(x → y)`.
    pub kappa1: f64,
    /// Spectral radius of the kernel restricted to states outside `K_r`.
    pub spectral_radius_outside: f64,
    pub phi1: Option<Vec<f64>>,
    pub c1: Option<f64>,
    pub b1: bool,
    pub b2a: bool,
    pub b2b: bool,
    pub b2c: bool,
    pub b2d: bool,
    /// `max_{x∉K} (Pφ1(x) − θ1 φ1(x))`; positive values break (B2)(c).
    pub b2c_worst_excess: Option<f64>,
    pub b2c_violations: usize,
    pub note: Option<String>,
}

impl FosterReport {
    pub fn all_hold(&self) -> bool {
        self.b1 && self.b2a && self.b2b && self.b2c && self.b2d && self.c1.is_some_and(f64::is_finite)
    }
}

fn members(kernel: &TruncatedKernel, radius: f64) -> Vec<bool> {
    let cap = radius * kernel.n as f64 + 1e-9;
    kernel.states.iter().map(|s| s.iter().sum::<u64>() as f64 <= cap).collect()
}

fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn foster_check(kernel: &TruncatedKernel, k_radius: f64, theta1: f64, theta2: f64, r: f64) -> Result<FosterReport> {
    if !(theta1 < theta2) || !(theta1 > 0.0) {
        return Err(Error::Precondition(format!("need 0 < theta1 < theta2, got {theta1}, {theta2}")));
    }
    let in_k = members(kernel, k_radius);
    let in_kr = members(kernel, r);
    if !in_k.iter().any(|&b| b) {
        return Err(Error::Precondition(format!("K = {{x·1 <= {k_radius}}} holds no state")));
    }
    let n = kernel.len();
    let mut realized_theta2 = f64::INFINITY;
    let mut kappa1 = f64::INFINITY;
    let k_idx: Vec<usize> = (0..n).filter(|&i| in_k[i]).collect();
    for &i in &k_idx {
        let to_k: f64 = kernel.row(i).filter(|(j, _)| in_k[*j]).map(|(_, p)| p).sum();
        realized_theta2 = realized_theta2.min(to_k);
        for &j in &k_idx {
            kappa1 = kappa1.min(kernel.entry(i, j));
        }
    }

    let outside: Vec<usize> = (0..n).filter(|&i| !in_kr[i]).collect();
    let mut pos = vec![usize::MAX; n];
    for (a, &i) in outside.iter().enumerate() {
        pos[i] = a;
    }
    let m = outside.len();
    let mut p_oo = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for (a, &i) in outside.iter().enumerate() {
        rhs[a] = kernel.killed(i);
        for (j, p) in kernel.row(i) {
            if in_kr[j] {
                rhs[a] += p;
            } else {
                p_oo[(a, pos[j])] = p;
            }
        }
    }
    let rho = spectral_radius(&p_oo);
    let mut report = FosterReport {
        theta1,
        theta2,
        k_radius,
        r,
        realized_theta2,
        kappa1,
        spectral_radius_outside: rho,
        phi1: None,
        c1: None,
        b1: realized_theta2 > 0.0,
        b2a: false,
        b2b: true,
        b2c: false,
        b2d: theta2 <= realized_theta2,
        b2c_worst_excess: None,
        b2c_violations: 0,
        note: None,
    };
    if rho >= theta1 {
        report.note = Some(format!(
            "phi1 diverges: spectral radius {rho:.6} outside K_r is not below theta1 = {theta1}; (B2)(c) infeasible"
        ));
        return Ok(report);
    }
    let system = DMatrix::<f64>::identity(m, m) * theta1 - &p_oo;
    let solved = if m == 0 { Some(rhs.clone()) } else { system.lu().solve(&rhs) };
    let phi_o = match solved {
        Some(v) => v,
        None => {
            report.note = Some("singular first-passage system; (B2)(c) infeasible".into());
            return Ok(report);
        }
    };
    let mut phi1 = vec![1.0; n];
    for (a, &i) in outside.iter().enumerate() {
        phi1[i] = phi_o[a];
    }
    let p_phi = kernel.apply(&phi1);
    let inf_phi = phi1.iter().cloned().fold(f64::INFINITY, f64::min);
    let sup_k = k_idx.iter().map(|&i| phi1[i]).fold(0.0, f64::max);
    report.b2a = inf_phi >= 1.0 - 1e-12 && sup_k.is_finite();
    let mut worst = f64::NEG_INFINITY;
    let mut c1: f64 = 0.0;
    let mut violations = 0;
    for i in 0..n {
        let excess = p_phi[i] - theta1 * phi1[i];
        if in_k[i] {
            c1 = c1.max(excess);
        } else {
            worst = worst.max(excess);
            if excess > 1e-12 * phi1[i].max(1.0) {
                violations += 1;
            }
        }
    }
    report.b2c = violations == 0;
    report.b2c_violations = violations;
    report.b2c_worst_excess = worst.is_finite().then_some(worst);
    // c1 must be a positive constant; any positive value works when the bound already holds on K
    report.c1 = Some(c1.max(f64::MIN_POSITIVE));
    if violations > 0 {
        report.note = Some(format!(
            "(B2)(c) fails at {violations} states outside K, worst excess {worst:.4e}"
        ));
    }
    report.phi1 = Some(phi1);
    Ok(report)
}

/// Tries `θ2 = realized θ2` with `θ1` on a grid strictly between the spectral radius
/// outside `K_r` and `θ2`, for each `r ≥ k_radius`. Returns every attempt; the first
/// passing report, if any, is marked by `Some(index)`.
pub fn foster_search(
    kernel: &TruncatedKernel,
    k_radius: f64,
    r_list: &[f64],
    theta1_points: usize,
) -> Result<(Option<usize>, Vec<FosterReport>)> {
    let mut tried = Vec::new();
    for &r in r_list {
        if r < k_radius {
            continue;
        }
        // θ1 is arbitrary here; the probe only reads θ2 and the spectral radius.
        let probe = foster_check(kernel, k_radius, 1e-9, 1.0, r)?;
        let theta2 = probe.realized_theta2;
        let lo = probe.spectral_radius_outside;
        let candidates: Vec<f64> = if lo < theta2 {
            (1..=theta1_points)
                .map(|k| lo + (theta2 - lo) * k as f64 / (theta1_points + 1) as f64)
                .collect()
        } else {
            // empty window: record the obstruction with θ1 just below θ2
            vec![theta2 * (1.0 - 1e-6)]
        };
        for theta1 in candidates {
            if !(theta1 > 0.0) || theta2 <= 0.0 {
                continue;
            }
            let rep = foster_check(kernel, k_radius, theta1, theta2, r)?;
            let ok = rep.all_hold();
            tried.push(rep);
            if ok {
                return Ok((Some(tried.len() - 1), tried));
            }
        }
    }
    Ok((None, tried))
}
