//! The Binomial–Poisson population model.
//!
//! At every step each of the `N·x_i` individuals of type `i` dies with
//! probability `1/N` and `Poisson(F_i(x))` new type-`i` individuals are born.
//! The scaled state moves by `η/N` with `η = U − V`. The birth field `F`
//! determines everything else: the drift `G(x) = F(x) − x` of the limiting
//! flow, the increment log-MGFs and the local rate function.

mod increment;
mod rate;
mod validate;

pub use increment::{lattice_counts, sample_increment, sample_increment_counts, IncrementSampler};
pub use rate::{local_rate, log_mgf_limit, log_mgf_prelimit, Rate};
pub(crate) use rate::local_rate_with_birth;
pub use validate::{validate_assumptions, AssumptionCheck, Region, ValidationReport, Verdict};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multilinear table for a user-supplied birth field.
///
/// Nodes form a rectilinear grid on `[0, upper_1] × … × [0, upper_d]` with
/// `shape[k]` equally spaced points along axis `k`. `values` is row-major
/// (last axis fastest); each entry holds the `d` components of `F` at that
/// node. Queries outside the table are clamped onto it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthTable {
    pub upper: Vec<f64>,
    pub shape: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

/// Parametric birth fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum BirthFamily {
    /// `F_i(x) = b_i x_i / (1 + Σ_j c_ij x_j)`.
    BevertonHolt { b: Vec<f64>, c: Vec<Vec<f64>> },
    /// `F_i(x) = x_i exp(r_i − Σ_j a_ij x_j^{p_ij})`, with `p_ij = 1` unless
    /// `exponents` is given.
    Ricker {
        r: Vec<f64>,
        a: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        exponents: Option<Vec<Vec<f64>>>,
    },
    Custom(BirthTable),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawModel {
    d: usize,
    #[serde(flatten)]
    family: BirthFamily,
}

/// A validated model: dimension plus birth field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct ModelSpec {
    d: usize,
    family: BirthFamily,
    sup_bounds: Vec<f64>,
}

impl TryFrom<RawModel> for ModelSpec {
    type Error = Error;
    fn try_from(raw: RawModel) -> Result<Self> {
        ModelSpec::new(raw.d, raw.family)
    }
}

impl From<ModelSpec> for RawModel {
    fn from(m: ModelSpec) -> Self {
        RawModel {
            d: m.d,
            family: m.family,
        }
    }
}

fn check_square(name: &str, m: &[Vec<f64>], d: usize) -> Result<()> {
    if m.len() != d || m.iter().any(|row| row.len() != d) {
        return Err(Error::InvalidModel(format!("{name} must be a {d}x{d} matrix")));
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidModel(format!("{name} has non-finite entries")));
    }
    Ok(())
}

impl ModelSpec {
    pub fn new(d: usize, family: BirthFamily) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidModel("dimension d must be positive".into()));
        }
        let sup_bounds = match &family {
            BirthFamily::BevertonHolt { b, c } => {
                if b.len() != d {
                    return Err(Error::InvalidModel(format!("b must have {d} entries")));
                }
                check_square("c", c, d)?;
                if b.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidModel("b must be finite and non-negative".into()));
                }
                if c.iter().flatten().any(|&v| v < 0.0) {
                    return Err(Error::InvalidModel("c must be non-negative".into()));
                }
                (0..d)
                    .map(|i| {
                        if b[i] == 0.0 {
                            Ok(0.0)
                        } else if c[i][i] > 0.0 {
                            Ok(b[i] / c[i][i])
                        } else {
                            Err(Error::InvalidModel(format!(
                                "c[{i}][{i}] must be positive for F_{i} to be bounded"
                            )))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            BirthFamily::Ricker { r, a, exponents } => {
                if r.len() != d {
                    return Err(Error::InvalidModel(format!("r must have {d} entries")));
                }
                if r.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidModel("r must be finite".into()));
                }
                check_square("a", a, d)?;
                if a.iter().flatten().any(|&v| v < 0.0) {
                    return Err(Error::InvalidModel("a must be non-negative".into()));
                }
                if let Some(p) = exponents {
                    check_square("exponents", p, d)?;
                    if p.iter().flatten().any(|&v| v <= 0.0) {
                        return Err(Error::InvalidModel("exponents must be positive".into()));
                    }
                }
                (0..d)
                    .map(|i| {
                        let p = exponents.as_ref().map_or(1.0, |p| p[i][i]);
                        if a[i][i] <= 0.0 {
                            return Err(Error::InvalidModel(format!(
                                "a[{i}][{i}] must be positive for F_{i} to be bounded"
                            )));
                        }
                        // max_s s·exp(r − a s^p) is attained at s^p = 1/(a p)
                        Ok((a[i][i] * p).powf(-1.0 / p) * (r[i] - 1.0 / p).exp())
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            BirthFamily::Custom(table) => validate_table(table, d)?,
        };
        Ok(Self {
            d,
            family,
            sup_bounds,
        })
    }

    pub fn beverton_holt(b: Vec<f64>, c: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(b.len(), BirthFamily::BevertonHolt { b, c })
    }

    pub fn ricker(r: Vec<f64>, a: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            r.len(),
            BirthFamily::Ricker {
                r,
                a,
                exponents: None,
            },
        )
    }

    pub fn ricker_with_exponents(r: Vec<f64>, a: Vec<Vec<f64>>, p: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            r.len(),
            BirthFamily::Ricker {
                r,
                a,
                exponents: Some(p),
            },
        )
    }

    pub fn custom(d: usize, table: BirthTable) -> Result<Self> {
        Self::new(d, BirthFamily::Custom(table))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn family(&self) -> &BirthFamily {
        &self.family
    }

    /// Certified per-coordinate bounds `sup_x F_i(x)`.
    pub fn birth_sup_bounds(&self) -> &[f64] {
        &self.sup_bounds
    }

    /// Certified bound on `sup_x ‖F(x)‖` (Euclidean norm).
    pub fn birth_norm_bound(&self) -> f64 {
        self.sup_bounds.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `max_i ‖F_i‖_∞`.
    pub fn birth_max_bound(&self) -> f64 {
        self.sup_bounds.iter().cloned().fold(0.0, f64::max)
    }

    /// Birth field `F(x)`. Coordinates are used as given; callers are
    /// responsible for `x ∈ Δ`.
    pub fn birth_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.d);
        match &self.family {
            BirthFamily::BevertonHolt { b, c } => {
                for i in 0..self.d {
                    let denom = 1.0 + c[i].iter().zip(x).map(|(c, x)| c * x).sum::<f64>();
                    out[i] = b[i] * x[i] / denom;
                }
            }
            BirthFamily::Ricker { r, a, exponents } => {
                for i in 0..self.d {
                    let mut pressure = 0.0;
                    for j in 0..self.d {
                        let p = exponents.as_ref().map_or(1.0, |p| p[i][j]);
                        let xj = x[j].max(0.0);
                        pressure += a[i][j] * if p == 1.0 { xj } else { xj.powf(p) };
                    }
                    out[i] = x[i] * (r[i] - pressure).exp();
                }
            }
            BirthFamily::Custom(table) => table_interpolate(table, self.d, x, out),
        }
    }

    pub fn birth(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.birth_into(x, &mut out);
        out
    }

    /// Drift `G(x) = F(x) − x` of the limiting flow.
    pub fn drift(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok(self.drift_unchecked(x))
    }

    pub(crate) fn drift_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.birth(x);
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi -= xi;
        }
        g
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::Domain(format!(
                "point has {} coordinates, model dimension is {}",
                x.len(),
                self.d
            )));
        }
        if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("coordinate {i} = {v} is outside Δ")));
        }
        Ok(())
    }
}

fn validate_table(table: &BirthTable, d: usize) -> Result<Vec<f64>> {
    if table.upper.len() != d || table.shape.len() != d {
        return Err(Error::InvalidModel(format!("table axes must have {d} entries")));
    }
    if table.upper.iter().any(|&u| !(u > 0.0) || !u.is_finite()) {
        return Err(Error::InvalidModel("table upper bounds must be positive".into()));
    }
    if table.shape.iter().any(|&s| s < 2) {
        return Err(Error::InvalidModel("table needs at least 2 points per axis".into()));
    }
    let count: usize = table.shape.iter().product();
    if table.values.len() != count || table.values.iter().any(|v| v.len() != d) {
        return Err(Error::InvalidModel(format!(
            "table must have {count} entries of {d} components"
        )));
    }
    if table.values.iter().flatten().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidModel("table values must be finite and non-negative".into()));
    }
    let mut bounds = vec![0.0f64; d];
    let mut idx = vec![0usize; d];
    for values in &table.values {
        for i in 0..d {
            if idx[i] == 0 && values[i] != 0.0 {
                return Err(Error::InvalidModel(format!(
                    "table entry at {idx:?} has F_{i} = {} on the face x_{i} = 0",
                    values[i]
                )));
            }
            bounds[i] = bounds[i].max(values[i]);
        }
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < table.shape[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(bounds)
}

fn table_interpolate(table: &BirthTable, d: usize, x: &[f64], out: &mut [f64]) {
    let mut base = vec![0usize; d];
    let mut frac = vec![0.0f64; d];
    for k in 0..d {
        let cells = (table.shape[k] - 1) as f64;
        let s = (x[k].clamp(0.0, table.upper[k]) / table.upper[k]) * cells;
        let i = (s.floor() as usize).min(table.shape[k] - 2);
        base[k] = i;
        frac[k] = s - i as f64;
    }
    out.iter_mut().for_each(|v| *v = 0.0);
    for corner in 0..(1usize << d) {
        let mut weight = 1.0;
        let mut flat = 0usize;
        for k in 0..d {
            let bit = (corner >> k) & 1;
            weight *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
            flat = flat * table.shape[k] + base[k] + bit;
        }
        if weight == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(&table.values[flat]) {
            *o += weight * v;
        }
    }
}

/// Models used throughout the examples, tests and shipped configurations.
pub mod shipped {
    use super::ModelSpec;

    /// One-dimensional Beverton–Holt with `b = 2`, `c = 1`; interior fixed point `x* = 1`.
    pub fn beverton_holt_1d() -> ModelSpec {
        ModelSpec::beverton_holt(vec![2.0], vec![vec![1.0]]).expect("valid parameters")
    }

    /// Two-type Ricker competition with a unique, stable interior equilibrium at `(2/3, 2/3)`.
    pub fn competition_ricker_2d() -> ModelSpec {
        ModelSpec::ricker(vec![1.0, 1.0], vec![vec![1.0, 0.5], vec![0.5, 1.0]]).expect("valid parameters")
    }

    /// Two-type Ricker with quadratic cross-inhibition
    /// `F_i = x_i exp(4 − x_i − 0.22 x_j²)`: two stable interior equilibria near
    /// `(3.911, 0.637)` and `(0.637, 3.911)` separated by a saddle on the diagonal.
    pub fn bistable_ricker_2d() -> ModelSpec {
        ModelSpec::ricker_with_exponents(
            vec![4.0, 4.0],
            vec![vec![1.0, 0.22], vec![0.22, 1.0]],
            vec![vec![1.0, 2.0], vec![2.0, 1.0]],
        )
        .expect("valid parameters")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_beverton_holt_examples() {
        let m = shipped::beverton_holt_1d();
        assert_eq!(m.drift(&[1.0]).unwrap(), vec![0.0]);
        assert_eq!(m.drift(&[0.0]).unwrap(), vec![0.0]);
        let g = m.drift(&[0.5]).unwrap()[0];
        assert!((g - (1.0 / 1.5 - 0.5)).abs() < 1e-15);
        assert!((g - 0.166_666_666_666_666_7).abs() < 1e-12);
    }

    #[test]
    fn drift_rejects_negative_coordinates() {
        let m = shipped::beverton_holt_1d();
        assert!(matches!(m.drift(&[-0.1]), Err(Error::Domain(_))));
        assert!(matches!(m.drift(&[0.1, 0.2]), Err(Error::Domain(_))));
    }

    #[test]
    fn birth_vanishes_on_faces() {
        for m in [shipped::competition_ricker_2d(), shipped::bistable_ricker_2d()] {
            let f = m.birth(&[0.0, 1.3]);
            assert_eq!(f[0], 0.0);
            assert!(f[1] > 0.0);
            assert_eq!(m.drift(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn sup_bounds_dominate_samples() {
        for m in [shipped::beverton_holt_1d(), shipped::competition_ricker_2d(), shipped::bistable_ricker_2d()] {
            let bounds = m.birth_sup_bounds().to_vec();
            for k in 0..400 {
                let x: Vec<f64> = (0..m.d()).map(|i| 0.05 * ((k * (i + 3)) % 200) as f64).collect();
                let f = m.birth(&x);
                for i in 0..m.d() {
                    assert!(f[i] <= bounds[i] + 1e-12, "{f:?} vs {bounds:?}");
                }
            }
        }
        assert!((shipped::beverton_holt_1d().birth_norm_bound() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn bistable_equilibria() {
        let m = shipped::bistable_ricker_2d();
        let g = m.drift(&[3.9109, 0.6350]).unwrap();
        assert!(g.iter().all(|v| v.abs() < 5e-3), "{g:?}");
        // symmetric saddle solves 0.22 s² + s − 4 = 0
        let s = (-1.0 + (1.0f64 + 16.0 * 0.22).sqrt()) / (2.0 * 0.22);
        let g = m.drift(&[s, s]).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12), "{g:?}");
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(ModelSpec::beverton_holt(vec![2.0], vec![vec![0.0]]).is_err());
        assert!(ModelSpec::beverton_holt(vec![-1.0], vec![vec![1.0]]).is_err());
        assert!(ModelSpec::ricker(vec![1.0], vec![vec![0.0]]).is_err());
        assert!(ModelSpec::new(0, BirthFamily::BevertonHolt { b: vec![], c: vec![] }).is_err());
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"d": 1, "family": "beverton_holt", "params": {"b": [2.0], "c": [[1.0]]}}"#;
        let m = ModelSpec::from_json(text).unwrap();
        assert_eq!(m, shipped::beverton_holt_1d());
        let back = serde_json::to_string(&m).unwrap();
        assert_eq!(ModelSpec::from_json(&back).unwrap(), m);
        assert!(ModelSpec::from_json(r#"{"d": 1, "family": "beverton_holt", "params": {"b": [2.0], "c": [[0.0]]}}"#).is_err());
    }

    #[test]
    fn custom_table_interpolates_and_clamps() {
        // F(x) = 2x/(1+x) sampled on [0, 4] with 5 nodes
        let values: Vec<Vec<f64>> = (0..5).map(|k| vec![2.0 * k as f64 / (1.0 + k as f64)]).collect();
        let table = BirthTable { upper: vec![4.0], shape: vec![5], values };
        let m = ModelSpec::custom(1, table).unwrap();
        assert_eq!(m.birth(&[0.0]), vec![0.0]);
        assert!((m.birth(&[1.0])[0] - 1.0).abs() < 1e-15);
        assert!((m.birth(&[0.5])[0] - 0.5).abs() < 1e-15);
        assert!((m.birth(&[10.0])[0] - 1.6).abs() < 1e-15);
        assert!((m.birth_sup_bounds()[0] - 1.6).abs() < 1e-15);
    }

    #[test]
    fn custom_table_must_vanish_on_faces() {
        let table = BirthTable { upper: vec![1.0], shape: vec![2], values: vec![vec![0.1], vec![1.0]] };
        assert!(ModelSpec::custom(1, table).is_err());
    }

    #[test]
    fn bilinear_table_matches_corners() {
        // F_1 = x_1, F_2 = x_2 x_1 on the unit square (exactly bilinear)
        let mut values = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                let (x1, x2) = (i as f64 * 0.5, j as f64 * 0.5);
                values.push(vec![x1, x1 * x2]);
            }
        }
        let m = ModelSpec::custom(2, BirthTable { upper: vec![1.0, 1.0], shape: vec![3, 3], values }).unwrap();
        let f = m.birth(&[0.3, 0.7]);
        assert!((f[0] - 0.3).abs() < 1e-14);
        assert!((f[1] - 0.21).abs() < 1e-14);
    }
}
