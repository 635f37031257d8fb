//! Increment log-MGFs and their Legendre transform.
//!
//! Per coordinate the increment is `Poisson(f) − Binomial(N m, 1/N)` at scale
//! `N` and `Poisson(f) − Poisson(m)` in the limit, with `f = F_i(x)` and
//! `m = x_i`. Coordinates are independent, so both the log-MGF and the rate
//! function split into per-coordinate sums.

use std::ops::Add;

use serde::{Deserialize, Serialize};

use super::ModelSpec;
use crate::error::{Error, Result};

/// Value of the local rate function. Velocities outside the reachable cone of
/// the limiting kernel are `Infinite` rather than an overflowing float, so
/// quadrature can detect and skip them deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Rate {
    Finite(f64),
    Infinite,
}

impl Rate {
    /// The numeric value, `f64::INFINITY` for unreachable velocities.
    pub fn value(self) -> f64 {
        match self {
            Rate::Finite(v) => v,
            Rate::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Rate::Finite(_))
    }
}

impl Add for Rate {
    type Output = Rate;
    fn add(self, rhs: Rate) -> Rate {
        match (self, rhs) {
            (Rate::Finite(a), Rate::Finite(b)) => Rate::Finite(a + b),
            _ => Rate::Infinite,
        }
    }
}

fn check_dims(model: &ModelSpec, x: &[f64], v: &[f64], what: &str) -> Result<()> {
    model.check_point(x)?;
    if v.len() != model.d() {
        return Err(Error::Domain(format!(
            "{what} has {} coordinates, model dimension is {}",
            v.len(),
            model.d()
        )));
    }
    Ok(())
}

/// `H^N(x, ζ) = Σ_i F_i(x)(e^{ζ_i} − 1) + N x_i ln(1 − 1/N + e^{−ζ_i}/N)`.
pub fn log_mgf_prelimit(model: &ModelSpec, x: &[f64], zeta: &[f64], n: u64) -> Result<f64> {
    check_dims(model, x, zeta, "zeta")?;
    if n == 0 {
        return Err(Error::Domain("scale N must be positive".into()));
    }
    let f = model.birth(x);
    let scale = n as f64;
    Ok((0..model.d())
        .map(|i| {
            let death_term = if x[i] == 0.0 {
                0.0
            } else {
                scale * x[i] * ((-zeta[i]).exp_m1() / scale).ln_1p()
            };
            f[i] * zeta[i].exp_m1() + death_term
        })
        .sum())
}

/// `H(x, ζ) = Σ_i F_i(x)(e^{ζ_i} − 1) + x_i(e^{−ζ_i} − 1)`.
pub fn log_mgf_limit(model: &ModelSpec, x: &[f64], zeta: &[f64]) -> Result<f64> {
    check_dims(model, x, zeta, "zeta")?;
    let f = model.birth(x);
    Ok((0..model.d())
        .map(|i| f[i] * zeta[i].exp_m1() + x[i] * (-zeta[i]).exp_m1())
        .sum())
}

/// Local rate `L(x, β) = sup_ζ {⟨ζ, β⟩ − H(x, ζ)}` in closed form.
pub fn local_rate(model: &ModelSpec, x: &[f64], beta: &[f64]) -> Result<Rate> {
    check_dims(model, x, beta, "beta")?;
    let f = model.birth(x);
    Ok(local_rate_with_birth(&f, x, beta))
}

pub(crate) fn local_rate_with_birth(f: &[f64], x: &[f64], beta: &[f64]) -> Rate {
    f.iter()
        .zip(x)
        .zip(beta)
        .map(|((&f, &m), &b)| coordinate_rate(f, m, b))
        .fold(Rate::Finite(0.0), Rate::add)
}

/// Legendre transform of `ζ ↦ f(e^ζ − 1) + m(e^{−ζ} − 1)` at `β`.
///
/// The maximiser `u = e^ζ` solves `f u² − β u − m = 0`; the positive root is
/// taken in whichever algebraic form avoids cancellation.
pub(crate) fn coordinate_rate(f: f64, m: f64, beta: f64) -> Rate {
    if f == 0.0 && m == 0.0 {
        return if beta == 0.0 { Rate::Finite(0.0) } else { Rate::Infinite };
    }
    if m == 0.0 {
        // pure Poisson(f) births
        return if beta < 0.0 {
            Rate::Infinite
        } else if beta == 0.0 {
            Rate::Finite(f)
        } else {
            Rate::Finite(beta * (beta / f).ln() - beta + f)
        };
    }
    if f == 0.0 {
        // pure Poisson(m) deaths
        return if beta > 0.0 {
            Rate::Infinite
        } else if beta == 0.0 {
            Rate::Finite(m)
        } else {
            Rate::Finite(-beta * (-beta / m).ln() + beta + m)
        };
    }
    let disc = (beta * beta + 4.0 * f * m).sqrt();
    let u = if beta >= 0.0 {
        (beta + disc) / (2.0 * f)
    } else {
        2.0 * m / (disc - beta)
    };
    let value = beta * u.ln() - f * (u - 1.0) - m * (1.0 / u - 1.0);
    Rate::Finite(value.max(0.0))
}
