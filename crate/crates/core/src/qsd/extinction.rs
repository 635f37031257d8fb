//! Geometric law of the extinction time started from the QSD.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{QsdEstimate, TruncatedKernel};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::rng::StreamKey;
use crate::simulate::{run_chain, RunOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionLawReport {
    pub samples: usize,
    pub success_probability: f64,
    pub mean_observed: f64,
    pub mean_expected: f64,
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Inclusive upper edges of the bins (last bin is open).
    pub bin_edges: Vec<u64>,
    pub observed: Vec<u64>,
    pub expected: Vec<f64>,
    pub censored: usize,
}

/// Bin edges at the geometric quantiles `k/bins`, merged where they coincide.
fn geometric_edges(q: f64, bins: usize) -> Vec<u64> {
    // P(T > t) = (1 - q)^t for T on {1, 2, ...}
    let mut edges = Vec::new();
    for k in 1..bins {
        let tail = 1.0 - k as f64 / bins as f64;
        let t = (tail.ln() / (-q).ln_1p()).floor().max(1.0) as u64;
        if edges.last().is_none_or(|&e| t > e) {
            edges.push(t);
        }
    }
    edges
}

/// Starts `samples` chains from `μ_N`, records the extinction step, and tests it
/// against `Geom(1 − per_step_survival)` with Pearson's chi-square.
pub fn extinction_law_test(
    model: &ModelSpec,
    kernel: &TruncatedKernel,
    qsd: &QsdEstimate,
    samples: usize,
    bins: usize,
    seed: u64,
) -> Result<ExtinctionLawReport> {
    if samples < 10 * bins || bins < 2 {
        return Err(Error::Precondition(format!("{samples} samples are too few for {bins} bins")));
    }
    let q = qsd.per_step_deficit;
    if !(q > 0.0) {
        return Err(Error::Precondition("the QSD never dies; the law is degenerate".into()));
    }
    let mut cdf = Vec::with_capacity(qsd.mu.len());
    let mut acc = 0.0;
    for w in &qsd.mu {
        acc += w;
        cdf.push(acc);
    }
    // Far beyond any plausible extinction time; hitting it counts as censoring.
    let cap = ((50.0 / q).ceil() as usize).max(1000);
    let times: Vec<Option<usize>> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let key = StreamKey::new(seed, k as u64);
            let u: f64 = key.derive(0x57a7).rng().random::<f64>() * acc;
            let i = cdf.partition_point(|c| *c < u).min(cdf.len() - 1);
            let x0 = kernel.point(i);
            let path = run_chain(model, &x0, kernel.n, &RunOptions::new(cap).thinned(cap), key)?;
            Ok(path.extinct_at)
        })
        .collect::<Result<_>>()?;
    let censored = times.iter().filter(|t| t.is_none()).count();
    let edges = geometric_edges(q, bins);
    let mut observed = vec![0u64; edges.len() + 1];
    let mut total_steps = 0.0;
    for t in times.iter().flatten() {
        let t = *t as u64;
        total_steps += t as f64;
        let b = edges.partition_point(|&e| e < t);
        observed[b] += 1;
    }
    let m = samples as f64;
    let mut expected = Vec::with_capacity(observed.len());
    let mut prev_tail = 1.0;
    for &e in &edges {
        let tail = (e as f64 * (-q).ln_1p()).exp();
        expected.push(m * (prev_tail - tail));
        prev_tail = tail;
    }
    expected.push(m * prev_tail);
    let chi_square: f64 = observed
        .iter()
        .zip(&expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    let dof = observed.len() - 1;
    let p_value = 1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(chi_square);
    Ok(ExtinctionLawReport {
        samples,
        success_probability: q,
        mean_observed: total_steps / (samples - censored).max(1) as f64,
        mean_expected: 1.0 / q,
        chi_square,
        dof,
        p_value,
        bin_edges: edges,
        observed,
        expected,
        censored,
    })
}
