use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use super::ModelSpec;
use crate::error::{Error, Result};

/// Converts a point of `Δ_N` into integer population counts `N·x`.
pub fn lattice_counts(x: &[f64], n: u64) -> Result<Vec<u64>> {
    if n == 0 {
        return Err(Error::Domain("scale N must be positive".into()));
    }
    x.iter()
        .enumerate()
        .map(|(i, &xi)| {
            if !(xi >= 0.0) || !xi.is_finite() {
                return Err(Error::Domain(format!("coordinate {i} = {xi} is outside Δ")));
            }
            let scaled = xi * n as f64;
            let rounded = scaled.round();
            if (scaled - rounded).abs() > 1e-9 * scaled.max(1.0) {
                return Err(Error::Domain(format!(
                    "coordinate {i} = {xi} is not a multiple of 1/{n}"
                )));
            }
            Ok(rounded as u64)
        })
        .collect()
}

/// One increment `η = U − V` for the chain at `x ∈ Δ_N`.
pub fn sample_increment<R: Rng + ?Sized>(model: &ModelSpec, x: &[f64], n: u64, rng: &mut R) -> Result<Vec<i64>> {
    model.check_point(x)?;
    let counts = lattice_counts(x, n)?;
    let mut eta = vec![0i64; model.d()];
    sample_increment_counts(model, &counts, n, rng, &mut eta);
    Ok(eta)
}

/// Single-shot variant working on population counts.
pub fn sample_increment_counts<R: Rng + ?Sized>(
    model: &ModelSpec,
    counts: &[u64],
    n: u64,
    rng: &mut R,
    eta: &mut [i64],
) {
    IncrementSampler::new(model, n).sample(counts, rng, eta);
}

/// Reusable increment sampler with scratch buffers for hot simulation loops.
#[derive(Debug, Clone)]
pub struct IncrementSampler<'a> {
    model: &'a ModelSpec,
    n: u64,
    x: Vec<f64>,
    f: Vec<f64>,
}

impl<'a> IncrementSampler<'a> {
    pub fn new(model: &'a ModelSpec, n: u64) -> Self {
        Self {
            model,
            n,
            x: vec![0.0; model.d()],
            f: vec![0.0; model.d()],
        }
    }

    pub fn scale(&self) -> u64 {
        self.n
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, counts: &[u64], rng: &mut R, eta: &mut [i64]) {
        let scale = self.n as f64;
        for (x, &c) in self.x.iter_mut().zip(counts) {
            *x = c as f64 / scale;
        }
        self.model.birth_into(&self.x, &mut self.f);
        for i in 0..counts.len() {
            let births = if self.f[i] > 0.0 {
                Poisson::new(self.f[i]).expect("positive finite mean").sample(rng) as i64
            } else {
                0
            };
            let deaths = if counts[i] > 0 && self.n > 1 {
                Binomial::new(counts[i], 1.0 / scale).expect("valid binomial").sample(rng) as i64
            } else {
                // N = 1: every individual dies
                counts[i] as i64
            };
            eta[i] = births - deaths;
        }
    }
}
