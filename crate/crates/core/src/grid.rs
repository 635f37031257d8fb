//! Rectilinear probe grids over axis-aligned boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An axis-aligned box `[lower_1, upper_1] × … × [lower_d, upper_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper }
    }

    pub fn cube(d: usize, lower: f64, upper: f64) -> Self {
        Self {
            lower: vec![lower; d],
            upper: vec![upper; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }
}

/// Uniform lattice `lower + step·k` inside a box, stored implicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lower: Vec<f64>,
    pub step: f64,
    pub counts: Vec<usize>,
}

impl Grid {
    pub fn new(region: &BoxRegion, step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::Precondition(format!("grid step must be positive, got {step}")));
        }
        if region.lower.len() != region.upper.len() || region.lower.is_empty() {
            return Err(Error::Precondition("box bounds must have matching, non-zero dimension".into()));
        }
        let mut counts = Vec::with_capacity(region.dim());
        for (k, (l, u)) in region.lower.iter().zip(&region.upper).enumerate() {
            if !(u >= l) || !l.is_finite() || !u.is_finite() {
                return Err(Error::Precondition(format!("box axis {k} is empty: [{l}, {u}]")));
            }
            counts.push(((u - l) / step + 1e-9).floor() as usize + 1);
        }
        Ok(Self {
            lower: region.lower.clone(),
            step,
            counts,
        })
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major multi-index of a flat node id (last axis fastest).
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = flat % self.counts[k];
            flat /= self.counts[k];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (i, c)| acc * c + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.lower)
            .map(|(&i, l)| l + i as f64 * self.step)
            .collect()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |k| self.point(k))
    }

    /// Nearest node to `x`, or `None` if `x` is more than half a step outside the grid.
    pub fn nearest(&self, x: &[f64]) -> Option<usize> {
        let mut idx = Vec::with_capacity(self.dim());
        for (k, &v) in x.iter().enumerate().take(self.dim()) {
            let s = ((v - self.lower[k]) / self.step).round();
            if s < 0.0 || s >= self.counts[k] as f64 {
                return None;
            }
            idx.push(s as usize);
        }
        Some(self.flat_index(&idx))
    }

    /// Nodes at Euclidean distance strictly less than `radius` from `x`.
    pub fn nodes_within(&self, x: &[f64], radius: f64) -> Vec<usize> {
        let d = self.dim();
        let mut lo = vec![0usize; d];
        let mut hi = vec![0usize; d];
        for k in 0..d {
            let a = ((x[k] - radius - self.lower[k]) / self.step).ceil();
            let b = ((x[k] + radius - self.lower[k]) / self.step).floor();
            if b < 0.0 || a > (self.counts[k] - 1) as f64 {
                return Vec::new();
            }
            lo[k] = a.max(0.0) as usize;
            hi[k] = b.min((self.counts[k] - 1) as f64) as usize;
            if lo[k] > hi[k] {
                return Vec::new();
            }
        }
        let mut out = Vec::new();
        let mut idx = lo.clone();
        let r2 = radius * radius;
        loop {
            let dist2: f64 = (0..d)
                .map(|k| {
                    let p = self.lower[k] + idx[k] as f64 * self.step;
                    (p - x[k]) * (p - x[k])
                })
                .sum();
            if dist2 < r2 {
                out.push(self.flat_index(&idx));
            }
            let mut k = d;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                if idx[k] < hi[k] {
                    idx[k] += 1;
                    break;
                }
                idx[k] = lo[k];
            }
        }
    }

    /// Flat id of the node offset by `offset` lattice steps, if it exists.
    pub fn offset(&self, flat: usize, offset: &[i64]) -> Option<usize> {
        let mut idx = self.multi_index(flat);
        for k in 0..self.dim() {
            let v = idx[k] as i64 + offset[k];
            if v < 0 || v >= self.counts[k] as i64 {
                return None;
            }
            idx[k] = v as usize;
        }
        Some(self.flat_index(&idx))
    }
}

/// All non-zero integer offsets with `‖o‖_∞ ≤ ring`.
pub fn ring_offsets(d: usize, ring: usize) -> Vec<Vec<i64>> {
    let r = ring as i64;
    let side = (2 * r + 1) as usize;
    let total = side.pow(d as u32);
    (0..total)
        .filter_map(|mut k| {
            let mut o = vec![0i64; d];
            for slot in o.iter_mut().rev() {
                *slot = (k % side) as i64 - r;
                k /= side;
            }
            o.iter().any(|&v| v != 0).then_some(o)
        })
        .collect()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
