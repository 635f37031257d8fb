//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use quasistat::qsd::TruncatedKernel;

/// Left Perron vector of the dense substochastic matrix, from the eigenvalue of
/// largest modulus and the null space of `Pᵀ − ρI` (smallest singular vector).
pub fn dense_perron(kernel: &TruncatedKernel) -> (f64, Vec<f64>) {
    let n = kernel.len();
    let mut pt = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for (j, v) in kernel.row(i) {
            pt[(j, i)] += v;
        }
    }
    let rho = pt
        .complex_eigenvalues()
        .iter()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .map(|z| z.re)
        .unwrap();
    let shifted = &pt - DMatrix::<f64>::identity(n, n) * rho;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let k = (0..n)
        .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
        .unwrap();
    let mut v: Vec<f64> = v_t.row(k).iter().map(|x| x.abs()).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    (rho, v)
}

/// `sup_ζ ζβ − f(e^ζ − 1) − m(e^{−ζ} − 1)` by golden-section search on a bracket
/// grown until the derivative changes sign. Requires `f, m > 0`.
pub fn scalar_rate(f: f64, m: f64, beta: f64) -> f64 {
    let obj = |z: f64| z * beta - f * z.exp_m1() - m * (-z).exp_m1();
    let slope = |z: f64| beta - f * z.exp() + m * (-z).exp();
    let (mut lo, mut hi) = (-1.0, 1.0);
    while slope(lo) < 0.0 {
        lo *= 2.0;
    }
    while slope(hi) > 0.0 {
        hi *= 2.0;
    }
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if obj(c) > obj(d) {
            b = d;
        } else {
            a = c;
        }
        if b - a < 1e-13 {
            break;
        }
    }
    obj(0.5 * (a + b))
}

/// Adaptive Simpson quadrature.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 50)
}

/// Ordinary least squares of `y` on `x`: (slope, intercept, R²).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx, sxy * sxy / (sxx * syy))
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
