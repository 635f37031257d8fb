//! The limiting ODE `ẋ = G(x)`, its ω-limits, and absorption-preserving chain recurrence.

mod recurrence;

pub(crate) use recurrence::{make_class, merge_adjacent};

use serde::{Deserialize, Serialize};

pub use recurrence::{
    attractor_basin_check, chain_recurrence, is_ap_pseudo_orbit, BasinReport, ClassKind, PseudoOrbitCheck,
    PseudoOrbitGraph, RecurrenceClass, RecurrenceParams, RecurrenceReport,
};

use crate::error::{Error, Result};
use crate::grid::distance;
use crate::model::ModelSpec;

/// Coordinates in `(-CLAMP_TOL, 0)` are snapped to zero.
const CLAMP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowPath {
    pub samples: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    pub step: f64,
}

impl FlowPath {
    pub fn terminal(&self) -> &[f64] {
        self.samples.last().expect("a flow path has at least one sample")
    }

    /// Linear interpolation at time `t`, clamped to the path's time range.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if t <= self.times[0] || n == 1 {
            return self.samples[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.samples[n - 1].clone();
        }
        let k = (((t - self.times[0]) / self.step).floor() as usize).min(n - 2);
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        self.samples[k]
            .iter()
            .zip(&self.samples[k + 1])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }
}

/// Reusable RK4 stepper; avoids reallocating stage buffers.
pub(crate) struct Rk4<'a> {
    model: &'a ModelSpec,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a> Rk4<'a> {
    pub(crate) fn new(model: &'a ModelSpec) -> Self {
        let d = model.d();
        Self {
            model,
            k: [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]],
            tmp: vec![0.0; d],
        }
    }

    fn drift(model: &ModelSpec, x: &[f64], out: &mut [f64], clamped: &mut [f64]) {
        for (c, v) in clamped.iter_mut().zip(x) {
            *c = v.max(0.0);
        }
        model.birth_into(clamped, out);
        for (o, c) in out.iter_mut().zip(clamped.iter()) {
            *o -= c;
        }
    }

    /// Advances `x` by one step of size `h`, starting at time `t` (for error reporting).
    pub(crate) fn step(&mut self, x: &mut [f64], h: f64, t: f64) -> Result<()> {
        let d = x.len();
        let mut clamped = vec![0.0; d];
        let [k1, k2, k3, k4] = &mut self.k;
        Self::drift(self.model, x, k1, &mut clamped);
        for i in 0..d {
            self.tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        Self::drift(self.model, &self.tmp, k2, &mut clamped);
        for i in 0..d {
            self.tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        Self::drift(self.model, &self.tmp, k3, &mut clamped);
        for i in 0..d {
            self.tmp[i] = x[i] + h * k3[i];
        }
        Self::drift(self.model, &self.tmp, k4, &mut clamped);
        for i in 0..d {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if x[i] < 0.0 {
                if x[i] < -CLAMP_TOL {
                    return Err(Error::StepSize {
                        time: t + h,
                        coordinate: i,
                        value: x[i],
                    });
                }
                x[i] = 0.0;
            }
        }
        Ok(())
    }
}

fn step_count(duration: f64, step: f64) -> Result<usize> {
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::Precondition(format!("duration must be non-negative, got {duration}")));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Precondition(format!("step must be positive, got {step}")));
    }
    Ok(((duration / step) - 1e-9).ceil().max(0.0) as usize)
}

/// Classical fourth-order Runge–Kutta on a uniform grid covering `[0, duration]`.
///
/// The step is shrunk slightly if needed so that the grid ends exactly at `duration`.
pub fn integrate_flow(model: &ModelSpec, x0: &[f64], duration: f64, step: f64) -> Result<FlowPath> {
    model.check_point(x0)?;
    if !(duration > 0.0) {
        return Err(Error::Precondition(format!("duration must be positive, got {duration}")));
    }
    let n = step_count(duration, step)?.max(1);
    let h = duration / n as f64;
    let mut rk = Rk4::new(model);
    let mut x = x0.to_vec();
    let mut samples = Vec::with_capacity(n + 1);
    let mut times = Vec::with_capacity(n + 1);
    samples.push(x.clone());
    times.push(0.0);
    for k in 0..n {
        rk.step(&mut x, h, k as f64 * h)?;
        samples.push(x.clone());
        times.push((k + 1) as f64 * h);
    }
    Ok(FlowPath { samples, times, step: h })
}

/// The time-`duration` flow map `φ_T(x0)`, without storing the path.
pub fn flow_map(model: &ModelSpec, x0: &[f64], duration: f64, step: f64) -> Result<Vec<f64>> {
    model.check_point(x0)?;
    let n = step_count(duration, step)?;
    let mut x = x0.to_vec();
    if n == 0 {
        return Ok(x);
    }
    let h = duration / n as f64;
    let mut rk = Rk4::new(model);
    for k in 0..n {
        rk.step(&mut x, h, k as f64 * h)?;
    }
    Ok(x)
}

/// Path samples on `[burn_in, horizon]`, thinned greedily to a `net_radius`-net.
pub fn omega_limit_estimate(
    model: &ModelSpec,
    x0: &[f64],
    burn_in: f64,
    horizon: f64,
    step: f64,
    net_radius: f64,
) -> Result<Vec<Vec<f64>>> {
    if !(burn_in < horizon) {
        return Err(Error::Precondition(format!(
            "burn-in {burn_in} must precede the horizon {horizon}"
        )));
    }
    let path = integrate_flow(model, x0, horizon, step)?;
    let mut net: Vec<Vec<f64>> = Vec::new();
    for (t, x) in path.times.iter().zip(&path.samples) {
        if *t + 1e-12 < burn_in {
            continue;
        }
        if net.iter().all(|p| distance(p, x) >= net_radius) {
            net.push(x.clone());
        }
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::shipped;

    #[test]
    fn equilibria_are_fixed() {
        let m = shipped::beverton_holt_1d();
        let p = integrate_flow(&m, &[1.0], 5.0, 0.01).unwrap();
        assert!(p.samples.iter().all(|x| (x[0] - 1.0).abs() < 1e-15));
        let p = integrate_flow(&m, &[0.0], 5.0, 0.01).unwrap();
        assert!(p.samples.iter().all(|x| x[0] == 0.0));
    }

    #[test]
    fn beverton_holt_converges() {
        let m = shipped::beverton_holt_1d();
        let a = flow_map(&m, &[0.1], 20.0, 0.01).unwrap();
        let b = flow_map(&m, &[0.1], 20.0, 0.005).unwrap();
        // Reference from an adaptive high-accuracy solve of x' = x(1-x)/(1+x).
        assert!((1.0 - a[0] - 1.2920211808842286e-4).abs() < 1e-9);
        assert!((a[0] - b[0]).abs() < 1e-10);
        assert!((flow_map(&m, &[0.1], 30.0, 0.01).unwrap()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fourth_order_step_halving() {
        let m = shipped::competition_ricker_2d();
        let x0 = [0.2, 1.3];
        let exact = flow_map(&m, &x0, 3.0, 0.001).unwrap();
        let e1 = distance(&flow_map(&m, &x0, 3.0, 0.2).unwrap(), &exact);
        let e2 = distance(&flow_map(&m, &x0, 3.0, 0.1).unwrap(), &exact);
        let ratio = e1 / e2;
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }

    #[test]
    fn interpolation_hits_samples() {
        let m = shipped::beverton_holt_1d();
        let p = integrate_flow(&m, &[0.3], 1.0, 0.1).unwrap();
        assert_eq!(p.times.len(), 11);
        assert!((p.at(0.5)[0] - p.samples[5][0]).abs() < 1e-12);
        assert_eq!(p.at(7.0), p.terminal().to_vec());
    }

    #[test]
    fn omega_limits() {
        let m = shipped::beverton_holt_1d();
        let w = omega_limit_estimate(&m, &[0.1], 50.0, 60.0, 0.01, 1e-3).unwrap();
        assert_eq!(w.len(), 1);
        assert!((w[0][0] - 1.0).abs() < 1e-6);
        let m = shipped::competition_ricker_2d();
        let w = omega_limit_estimate(&m, &[0.3, 1.2], 60.0, 80.0, 0.01, 1e-3).unwrap();
        assert_eq!(w.len(), 1);
        assert!(distance(&w[0], &[2.0 / 3.0, 2.0 / 3.0]) < 1e-6);
        assert!(omega_limit_estimate(&m, &[0.3, 1.2], 5.0, 5.0, 0.01, 1e-3).is_err());
    }

    #[test]
    fn negative_start_rejected() {
        let m = shipped::beverton_holt_1d();
        assert!(integrate_flow(&m, &[-0.1], 1.0, 0.01).is_err());
        assert!(integrate_flow(&m, &[0.1], 0.0, 0.01).is_err());
        assert!(integrate_flow(&m, &[0.1], 1.0, 0.0).is_err());
    }
}
