//! Action functionals, graph quasipotentials and V-chain recurrence.

mod quadrature;
mod quasipotential;

use serde::{Deserialize, Serialize};

pub use quadrature::gauss_legendre;
pub use quasipotential::{
    compare_classes, default_time_grid, quasipotential_field, v_chain_classes, ClassComparison, ClassMatch,
    QuasipotentialField, QuasipotentialParams, VClassReport,
};

use crate::error::{Error, Result};
use crate::model::{local_rate, ModelSpec, Rate};

/// Polygonal path: straight segments between breakpoints, traversed at constant speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePath {
    pub breakpoints: Vec<Vec<f64>>,
    pub durations: Vec<f64>,
}

impl PiecewisePath {
    pub fn new(breakpoints: Vec<Vec<f64>>, durations: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 || durations.len() + 1 != breakpoints.len() {
            return Err(Error::Precondition(format!(
                "need k+1 >= 2 breakpoints for k durations, got {} and {}",
                breakpoints.len(),
                durations.len()
            )));
        }
        if durations.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::Precondition("segment durations must be positive".into()));
        }
        Ok(Self { breakpoints, durations })
    }

    pub fn total_time(&self) -> f64 {
        self.durations.iter().sum()
    }

    /// Repackages samples taken every `dt` as a path.
    pub fn from_samples(samples: Vec<Vec<f64>>, dt: f64) -> Result<Self> {
        let k = samples.len().saturating_sub(1);
        Self::new(samples, vec![dt; k])
    }

    /// Smallest coordinate over all breakpoints (segments are convex combinations).
    pub fn min_coordinate(&self) -> f64 {
        self.breakpoints
            .iter()
            .flat_map(|b| b.iter().cloned())
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionValue {
    pub value: Rate,
    /// First segment whose integrand is infinite.
    pub infinite_segment: Option<usize>,
}

/// `∫ L(φ, φ̇) dt` by composite Gauss–Legendre with `quad_points` nodes per segment.
pub fn action(model: &ModelSpec, path: &PiecewisePath, quad_points: usize) -> Result<ActionValue> {
    if quad_points < 2 {
        return Err(Error::Precondition("need at least two quadrature points per segment".into()));
    }
    if !(path.min_coordinate() > 0.0) {
        return Err(Error::Domain("action is defined for interior paths only".into()));
    }
    let (nodes, weights) = gauss_legendre(quad_points);
    let d = model.d();
    let mut total = 0.0;
    let mut x = vec![0.0; d];
    for (s, &t) in path.durations.iter().enumerate() {
        let (a, b) = (&path.breakpoints[s], &path.breakpoints[s + 1]);
        let beta: Vec<f64> = a.iter().zip(b).map(|(p, q)| (q - p) / t).collect();
        let mut seg = 0.0;
        for (z, w) in nodes.iter().zip(&weights) {
            let u = 0.5 * (z + 1.0);
            for k in 0..d {
                x[k] = a[k] + u * (b[k] - a[k]);
            }
            match local_rate(model, &x, &beta)? {
                Rate::Finite(v) => seg += w * v,
                Rate::Infinite => {
                    return Ok(ActionValue {
                        value: Rate::Infinite,
                        infinite_segment: Some(s),
                    })
                }
            }
        }
        total += 0.5 * t * seg;
    }
    Ok(ActionValue {
        value: Rate::Finite(total),
        infinite_segment: None,
    })
}

fn action_or_inf(model: &ModelSpec, path: &PiecewisePath, quad: usize) -> f64 {
    match action(model, path, quad) {
        Ok(ActionValue {
            value: Rate::Finite(v), ..
        }) => v,
        _ => f64::INFINITY,
    }
}

/// Golden-section minimisation of `f` on `[lo, hi]`.
fn golden<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Coordinate descent over interior breakpoints and log-durations, one golden-section
/// search per scalar. A move is kept only if it lowers the action, so the result is
/// never worse than the input. Breakpoints are clamped to coordinates `>= alpha`.
pub fn path_refine(
    model: &ModelSpec,
    path: &PiecewisePath,
    iterations: usize,
    alpha: f64,
    quad_points: usize,
) -> Result<PiecewisePath> {
    let mut best = path.clone();
    let mut best_s = action_or_inf(model, &best, quad_points);
    if !best_s.is_finite() {
        return Err(Error::Precondition("path refinement needs a finite initial action".into()));
    }
    let d = model.d();
    for it in 0..iterations {
        let scale = 0.5f64.powi(it as i32 / 4);
        for b in 1..best.breakpoints.len() - 1 {
            for k in 0..d {
                let span = scale
                    * 0.5
                    * (best.breakpoints[b + 1][k] - best.breakpoints[b - 1][k])
                        .abs()
                        .max(1e-3);
                let base = best.breakpoints[b][k];
                let mut trial = best.clone();
                let (arg, val) = golden(
                    |v| {
                        trial.breakpoints[b][k] = v.max(alpha);
                        action_or_inf(model, &trial, quad_points)
                    },
                    (base - span).max(alpha),
                    base + span,
                    30,
                );
                if val < best_s {
                    best.breakpoints[b][k] = arg.max(alpha);
                    best_s = val;
                }
            }
        }
        for s in 0..best.durations.len() {
            let base = best.durations[s].ln();
            let mut trial = best.clone();
            let (arg, val) = golden(
                |v| {
                    trial.durations[s] = v.exp();
                    action_or_inf(model, &trial, quad_points)
                },
                base - 2.0 * scale,
                base + 2.0 * scale,
                30,
            );
            if val < best_s {
                best.durations[s] = arg.exp();
                best_s = val;
            }
        }
    }
    Ok(best)
}
