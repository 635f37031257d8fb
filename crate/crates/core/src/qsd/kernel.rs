//! Exact one-step kernel of the chain restricted to interior states with `x·1 ≤ r`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, Discrete, Poisson};

use crate::error::{Error, Result};
use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RedirectPolicy {
    /// Mass leaving the box is killed, like absorption.
    #[default]
    Absorb,
    /// Mass leaving the box lands on the nearest kept state.
    Project,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelOptions {
    pub policy: RedirectPolicy,
    pub max_states: usize,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            policy: RedirectPolicy::Absorb,
            max_states: 200_000,
        }
    }
}

/// Row-substochastic kernel in CSR form over interior lattice states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedKernel {
    pub n: u64,
    pub r: f64,
    pub policy: RedirectPolicy,
    /// Population counts `N·x` of each state, in lexicographic order.
    pub states: Vec<Vec<u64>>,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
    /// One-step probability of landing on `∂Δ_N`.
    pub absorbed: Vec<f64>,
    /// One-step probability of leaving `K_r` while staying interior.
    pub overflow: Vec<f64>,
    /// Overflow mass not redirected (beyond the enumerated tail under `Project`, all of it under `Absorb`).
    pub leak: Vec<f64>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    index: HashMap<Vec<u64>, usize>,
}

/// Number of tuples with entries `≥ 1` summing to at most `total`: `C(total, d)`.
fn interior_count(total: u64, d: usize) -> Option<u128> {
    if (total as usize) < d {
        return Some(0);
    }
    let mut c: u128 = 1;
    for k in 0..d as u128 {
        c = c.checked_mul(total as u128 - k)? / (k + 1);
    }
    Some(c)
}

fn enumerate_states(total: u64, d: usize) -> Vec<Vec<u64>> {
    fn rec(prefix: &mut Vec<u64>, left: u64, d: usize, out: &mut Vec<Vec<u64>>) {
        let remaining = d - prefix.len();
        if remaining == 0 {
            out.push(prefix.clone());
            return;
        }
        let reserve = remaining as u64 - 1;
        if left < remaining as u64 {
            return;
        }
        for v in 1..=(left - reserve) {
            prefix.push(v);
            rec(prefix, left - v, d, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(d), total, d, &mut out);
    out
}

/// pmf of `n − Bin(n, 1/N) + Poi(f)` on `0..=upper`.
pub(crate) fn coordinate_pmf(count: u64, n: u64, f: f64, upper: usize) -> Vec<f64> {
    let p_death = 1.0 / n as f64;
    let deaths: Vec<f64> = match Binomial::new(p_death, count) {
        Ok(b) => (0..=count).map(|v| b.pmf(v)).collect(),
        Err(_) => unreachable!("1/N is a valid probability"),
    };
    let births: Vec<f64> = if f > 0.0 {
        let p = Poisson::new(f).expect("positive finite rate");
        (0..=upper as u64 + count).map(|u| p.pmf(u)).collect()
    } else {
        let mut v = vec![0.0; upper + count as usize + 1];
        v[0] = 1.0;
        v
    };
    let mut q = vec![0.0; upper + 1];
    for (m, slot) in q.iter_mut().enumerate() {
        // survivors s = count - v, births u = m - s
        let mut acc = 0.0;
        for (v, pv) in deaths.iter().enumerate() {
            let survivors = count as i64 - v as i64;
            let u = m as i64 - survivors;
            if u >= 0 {
                acc += pv * births[u as usize];
            }
        }
        *slot = acc;
    }
    q
}

/// Nearest point of `{y ∈ Z^d : y ≥ 1, Σ y ≤ total}` to `m` (with `Σ m > total`), ties to lower indices.
fn project_counts(m: &[u64], total: u64) -> Vec<u64> {
    let d = m.len();
    let mut y = vec![1u64; d];
    let mut left = total - d as u64;
    while left > 0 {
        // add one unit where it reduces (m_i - y_i)^2 the most; equal gains go to the
        // later coordinate, which yields the lexicographically smallest optimum
        let mut best = None;
        let mut best_gain = 0.0;
        for i in 0..d {
            let gain = 2.0 * (m[i] as f64 - y[i] as f64) - 1.0;
            if gain > 0.0 && gain >= best_gain {
                best_gain = gain;
                best = Some(i);
            }
        }
        match best {
            Some(i) => {
                y[i] += 1;
                left -= 1;
            }
            None => break,
        }
    }
    y
}

struct Row {
    cols: Vec<u32>,
    vals: Vec<f64>,
    absorbed: f64,
    overflow: f64,
    leak: f64,
}

impl TruncatedKernel {
    pub fn build(model: &ModelSpec, n: u64, r: f64, opts: &KernelOptions) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("scale N must be positive".into()));
        }
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Precondition(format!("truncation radius must be positive, got {r}")));
        }
        let d = model.d();
        let total = (r * n as f64 + 1e-9).floor() as u64;
        let count = interior_count(total, d).unwrap_or(u128::MAX);
        if count == 0 {
            return Err(Error::Precondition(format!("K_r with r = {r} holds no interior state at N = {n}")));
        }
        if count > opts.max_states as u128 {
            return Err(Error::BudgetExceeded {
                states: count.min(usize::MAX as u128) as usize,
                budget: opts.max_states,
            });
        }
        let mut warnings = Vec::new();
        let warn_r = 2.0 * model.birth_max_bound() * d as f64;
        if r < warn_r {
            warnings.push(format!(
                "truncation radius {r} is below 2·max|F_i|·d = {warn_r:.3}; overflow may be large"
            ));
        }
        let states = enumerate_states(total, d);
        let index: HashMap<Vec<u64>, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let upper = total as usize;
        let rows: Vec<Row> = states
            .par_iter()
            .map(|s| Self::build_row(model, n, total, upper, s, &states, &index, opts.policy))
            .collect();
        let mut row_ptr = Vec::with_capacity(states.len() + 1);
        row_ptr.push(0);
        let (mut cols, mut vals) = (Vec::new(), Vec::new());
        let (mut absorbed, mut overflow, mut leak) = (Vec::new(), Vec::new(), Vec::new());
        for row in rows {
            cols.extend(row.cols);
            vals.extend(row.vals);
            row_ptr.push(cols.len());
            absorbed.push(row.absorbed);
            overflow.push(row.overflow);
            leak.push(row.leak);
        }
        Ok(Self {
            n,
            r,
            policy: opts.policy,
            states,
            row_ptr,
            cols,
            vals,
            absorbed,
            overflow,
            leak,
            warnings,
            index,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn build_row(
        model: &ModelSpec,
        n: u64,
        total: u64,
        upper: usize,
        s: &[u64],
        states: &[Vec<u64>],
        index: &HashMap<Vec<u64>, usize>,
        policy: RedirectPolicy,
    ) -> Row {
        let d = s.len();
        let x: Vec<f64> = s.iter().map(|&c| c as f64 / n as f64).collect();
        let f = model.birth(&x);
        let extra = match policy {
            RedirectPolicy::Absorb => 0,
            RedirectPolicy::Project => {
                // cover the Poisson upper tail to ~1e-15 beyond the box
                let fmax = f.iter().cloned().fold(0.0, f64::max);
                (fmax + 12.0 * fmax.sqrt() + 40.0).ceil() as usize
            }
        };
        let q: Vec<Vec<f64>> = (0..d).map(|i| coordinate_pmf(s[i], n, f[i], upper + extra)).collect();
        let log_alive: f64 = q.iter().map(|qi| (-qi[0]).ln_1p()).sum();
        let absorbed = -log_alive.exp_m1();
        let alive = log_alive.exp();
        let mut vals_dense = vec![0.0; states.len()];
        let mut kept = 0.0;
        for (j, t) in states.iter().enumerate() {
            let mut p = 1.0;
            for i in 0..d {
                p *= q[i][t[i] as usize];
                if p == 0.0 {
                    break;
                }
            }
            vals_dense[j] = p;
            kept += p;
        }
        let overflow = (alive - kept).max(0.0);
        let mut leak = overflow;
        if policy == RedirectPolicy::Project && overflow > 0.0 {
            let mut moved = 0.0;
            let hi = upper + extra;
            let mut m = vec![1u64; d];
            loop {
                let sum: u64 = m.iter().sum();
                if sum > total {
                    let p: f64 = (0..d).map(|i| q[i][m[i] as usize]).product();
                    if p > 0.0 {
                        let target = project_counts(&m, total);
                        vals_dense[index[&target]] += p;
                        moved += p;
                    }
                }
                let mut k = d;
                let mut done = true;
                while k > 0 {
                    k -= 1;
                    if (m[k] as usize) < hi {
                        m[k] += 1;
                        done = false;
                        break;
                    }
                    m[k] = 1;
                }
                if done {
                    break;
                }
            }
            leak = (overflow - moved).max(0.0);
        }
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for (j, p) in vals_dense.into_iter().enumerate() {
            if p > 0.0 {
                cols.push(j as u32);
                vals.push(p);
            }
        }
        Row {
            cols,
            vals,
            absorbed,
            overflow,
            leak,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    pub fn index_of(&self, counts: &[u64]) -> Option<usize> {
        self.index.get(counts).copied()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.states[i].iter().map(|&c| c as f64 / self.n as f64).collect()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().zip(&self.vals[a..b]).map(|(&c, &v)| (c as usize, v))
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|(c, _)| *c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    /// Per-row mass that leaves the kernel: absorption plus whatever overflow is not redirected.
    pub fn killed(&self, i: usize) -> f64 {
        self.absorbed[i] + self.leak[i]
    }

    /// `ν P`.
    pub fn left_multiply(&self, nu: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, &w) in nu.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (j, p) in self.row(i) {
                out[j] += w * p;
            }
        }
    }

    /// `P f`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|i| self.row(i).map(|(j, p)| p * f[j]).sum()).collect()
    }

    /// Sparse triplets `row,col,prob`.
    pub fn to_triplet_csv(&self) -> String {
        let mut out = String::from("row,col,prob\n");
        for i in 0..self.len() {
            for (j, p) in self.row(i) {
                out.push_str(&format!("{i},{j},{p:e}\n"));
            }
        }
        out
    }

    /// Restores the lookup table after deserialisation.
    pub fn reindex(&mut self) {
        self.index = self.states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::shipped;

    #[test]
    fn state_enumeration() {
        assert_eq!(enumerate_states(4, 1), vec![vec![1], vec![2], vec![3], vec![4]]);
        let s = enumerate_states(5, 2);
        assert_eq!(s.len() as u128, interior_count(5, 2).unwrap());
        assert_eq!(s[0], vec![1, 1]);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(interior_count(1, 2), Some(0));
    }

    #[test]
    fn hand_convolution_small_kernel() {
        let m = shipped::beverton_holt_1d();
        let k = TruncatedKernel::build(&m, 2, 2.0, &KernelOptions::default()).unwrap();
        assert_eq!(k.states, vec![vec![1], vec![2], vec![3], vec![4]]);
        let f: f64 = 2.0 * 0.5 / 1.5;
        assert!((k.absorbed[0] - 0.5 * (-f).exp()).abs() < 1e-15);
        // 1/2 -> 1/2: (survive, no birth) or (die, one birth)
        let expected = 0.5 * (-f).exp() + 0.5 * f * (-f).exp();
        assert!((k.entry(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn conservation_per_row() {
        for (m, n, r) in [
            (shipped::beverton_holt_1d(), 10, 5.0),
            (shipped::competition_ricker_2d(), 6, 2.0),
        ] {
            for policy in [RedirectPolicy::Absorb, RedirectPolicy::Project] {
                let k = TruncatedKernel::build(&m, n, r, &KernelOptions { policy, max_states: 10_000 }).unwrap();
                for i in 0..k.len() {
                    let total = k.row_sum(i) + k.absorbed[i] + k.leak[i];
                    assert!((total - 1.0).abs() < 1e-12, "row {i}: {total}");
                    assert!(k.row(i).all(|(_, p)| (0.0..=1.0).contains(&p)));
                }
            }
        }
    }

    #[test]
    fn budget_and_empty_box() {
        let m = shipped::competition_ricker_2d();
        let err = TruncatedKernel::build(&m, 100, 10.0, &KernelOptions { max_states: 1000, ..Default::default() });
        assert!(matches!(err, Err(Error::BudgetExceeded { .. })));
        assert!(TruncatedKernel::build(&m, 10, 0.15, &KernelOptions::default()).is_err());
    }

    #[test]
    fn projection_is_nearest() {
        assert_eq!(project_counts(&[10], 4), vec![4]);
        assert_eq!(project_counts(&[5, 5], 6), vec![3, 3]);
        assert_eq!(project_counts(&[6, 5], 6), vec![3, 3]);
        assert_eq!(project_counts(&[5, 6], 7), vec![3, 4]);
        assert_eq!(project_counts(&[9, 1], 5), vec![4, 1]);
    }
}
