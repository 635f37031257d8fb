//! Numerical probes of the standing assumptions on a birth function.
//!
//! Grid probes can refute an assumption but never prove it; a `Pass` means no
//! violation was found at the sampled points.

use serde::{Deserialize, Serialize};

use super::ModelSpec;
use crate::grid::{norm, BoxRegion, Grid};

pub type Region = BoxRegion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Not checkable numerically; taken as given.
    Assumed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub verdict: Verdict,
    /// Worst sampled slack; positive means the inequality held with room to spare.
    pub margin: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub region: Region,
    pub step: f64,
    pub sup_norm_bound: f64,
    /// Radius beyond which the inward-drift inequality is asserted: `2‖F‖∞`.
    pub radius_m: f64,
    pub kappa: f64,
    pub lipschitz_estimate: Option<f64>,
    pub checks: Vec<AssumptionCheck>,
    pub error: Option<String>,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// True when nothing failed and no error was recorded.
    pub fn all_passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    /// Width of the boundary strip used for the repulsion probe.
    pub boundary_eps: f64,
    pub kappa: f64,
    /// Refuse grids larger than this many points.
    pub max_points: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            boundary_eps: 0.1,
            kappa: 0.5,
            max_points: 2_000_000,
        }
    }
}

const HALVINGS: i32 = 16;

pub fn validate_assumptions(model: &ModelSpec, region: &Region, step: f64) -> ValidationReport {
    validate_assumptions_with(model, region, step, &ValidationOptions::default())
}

pub fn validate_assumptions_with(
    model: &ModelSpec,
    region: &Region,
    step: f64,
    opts: &ValidationOptions,
) -> ValidationReport {
    let sup = model.birth_norm_bound();
    let mut report = ValidationReport {
        region: region.clone(),
        step,
        sup_norm_bound: sup,
        radius_m: 2.0 * sup,
        kappa: opts.kappa,
        lipschitz_estimate: None,
        checks: Vec::new(),
        error: None,
    };
    let d = model.d();
    if region.dim() != d || region.upper.len() != d {
        report.error = Some(format!("region has dimension {} but model has {d}", region.dim()));
        return report;
    }
    if let Some(k) = (0..d).find(|&k| !(region.upper[k] > region.lower[k]) || region.lower[k] < 0.0) {
        report.error = Some(format!(
            "region axis {k} has empty interior in the orthant: [{}, {}]",
            region.lower[k], region.upper[k]
        ));
        return report;
    }
    let grid = match Grid::new(region, step) {
        Ok(g) => g,
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    if grid.len() > opts.max_points {
        report.error = Some(format!("grid has {} points, limit is {}", grid.len(), opts.max_points));
        return report;
    }

    report.checks.push(AssumptionCheck {
        name: "2(a)".into(),
        verdict: Verdict::Assumed,
        margin: None,
        detail: "continuity of F is assumed for the supplied family".into(),
    });
    report.checks.push(AssumptionCheck {
        name: "2(b)".into(),
        verdict: Verdict::Assumed,
        margin: None,
        detail: "uniqueness of solutions of the limiting flow is assumed".into(),
    });

    let mut f = vec![0.0; d];
    let mut min_f = f64::INFINITY;
    let mut max_norm: f64 = 0.0;
    for x in grid.points() {
        model.birth_into(&x, &mut f);
        min_f = min_f.min(f.iter().cloned().fold(f64::INFINITY, f64::min));
        max_norm = max_norm.max(norm(&f));
    }
    report.checks.push(AssumptionCheck {
        name: "positivity".into(),
        verdict: if min_f >= 0.0 { Verdict::Pass } else { Verdict::Fail },
        margin: Some(min_f),
        detail: format!("min F_i over {} grid points", grid.len()),
    });
    report.checks.push(AssumptionCheck {
        name: "sup_bound".into(),
        verdict: if max_norm <= sup * (1.0 + 1e-12) { Verdict::Pass } else { Verdict::Fail },
        margin: Some(sup - max_norm),
        detail: format!("sampled max |F| = {max_norm:.6}, certified bound {sup:.6}"),
    });

    // Lipschitz estimate from forward differences along each axis.
    let mut lip: f64 = 0.0;
    let mut g = vec![0.0; d];
    for k in 0..grid.len() {
        let x = grid.point(k);
        model.birth_into(&x, &mut f);
        for axis in 0..d {
            let mut off = vec![0i64; d];
            off[axis] = 1;
            if let Some(j) = grid.offset(k, &off) {
                model.birth_into(&grid.point(j), &mut g);
                let diff: f64 = f.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                lip = lip.max(diff / step);
            }
        }
    }
    report.lipschitz_estimate = Some(lip);
    report.checks.push(AssumptionCheck {
        name: "lipschitz".into(),
        verdict: if lip.is_finite() { Verdict::Pass } else { Verdict::Fail },
        margin: None,
        detail: format!("finite-difference estimate {lip:.6}"),
    });

    // Face zeros: F_i vanishes where x_i = 0.
    let mut face_max: f64 = 0.0;
    for x in grid.points() {
        for i in 0..d {
            let mut y = x.clone();
            y[i] = 0.0;
            model.birth_into(&y, &mut f);
            face_max = face_max.max(f[i].abs());
        }
    }
    report.checks.push(AssumptionCheck {
        name: "face_zero".into(),
        verdict: if face_max == 0.0 { Verdict::Pass } else { Verdict::Fail },
        margin: Some(-face_max),
        detail: format!("max |F_i| on faces x_i = 0: {face_max:e}"),
    });

    boundary_checks(model, &grid, opts.boundary_eps, &mut report);
    inward_check(model, &grid, opts.kappa, &mut report);
    report
}

/// Boundary repulsion and vanishing drift near the faces.
fn boundary_checks(model: &ModelSpec, grid: &Grid, eps: f64, report: &mut ValidationReport) {
    let d = model.d();
    let mut margin = f64::INFINITY;
    let mut sups = vec![f64::NEG_INFINITY; HALVINGS as usize + 1];
    let levels: Vec<f64> = (0..=HALVINGS).map(|k| eps * 2f64.powi(-k)).collect();
    for x in grid.points() {
        for i in 0..d {
            let mut y = x.clone();
            for (k, &s) in levels.iter().enumerate() {
                y[i] = s;
                let g = model.drift_unchecked(&y);
                margin = margin.min(g[i] / s);
                sups[k] = sups[k].max(g[i]);
            }
            if x[i] > 0.0 && x[i] <= eps {
                let g = model.drift_unchecked(&x);
                margin = margin.min(g[i] / x[i]);
            }
        }
    }
    report.checks.push(AssumptionCheck {
        name: "2(c)".into(),
        verdict: if margin > 0.0 { Verdict::Pass } else { Verdict::Fail },
        margin: Some(margin),
        detail: format!("min G_i(x)/x_i over 0 < x_i <= {eps}"),
    });
    // Suprema over shrinking strips; the tail must decrease toward the face value 0.
    for k in (0..sups.len() - 1).rev() {
        sups[k] = sups[k].max(sups[k + 1]);
    }
    let last = *sups.last().unwrap();
    let face_ok = report.check("face_zero").map(|c| c.verdict == Verdict::Pass).unwrap_or(false);
    let shrinking = last.abs() <= sups[0].abs().max(f64::MIN_POSITIVE) || last.abs() < 1e-3;
    report.checks.push(AssumptionCheck {
        name: "2(d)".into(),
        verdict: if face_ok && shrinking { Verdict::Pass } else { Verdict::Fail },
        margin: Some(-last.abs()),
        detail: format!(
            "sup G_i over x_i <= delta: {:.3e} at delta={eps}, {:.3e} at delta={:.1e}",
            sups[0],
            last,
            levels.last().unwrap()
        ),
    });
}

/// Inward drift `<x, G(x)> <= -kappa |x|^2` for `|x| >= M`, probed on the grid and along rays.
fn inward_check(model: &ModelSpec, grid: &Grid, kappa: f64, report: &mut ValidationReport) {
    let m = report.radius_m;
    let mut worst = f64::INFINITY;
    let mut samples = 0usize;
    let mut probe = |x: &[f64]| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2.sqrt() < m || r2 == 0.0 {
            return;
        }
        let g = model.drift_unchecked(x);
        let ip: f64 = x.iter().zip(&g).map(|(a, b)| a * b).sum();
        worst = worst.min((-ip - kappa * r2) / r2 + 1e-12);
        samples += 1;
    };
    for x in grid.points() {
        probe(&x);
    }
    let radii = [1.0, 1.25, 1.5, 2.0, 3.0, 5.0, 10.0, 100.0];
    for x in grid.points() {
        let n = norm(&x);
        if n == 0.0 {
            continue;
        }
        for r in radii {
            let y: Vec<f64> = x.iter().map(|v| v / n * m.max(f64::MIN_POSITIVE) * r).collect();
            probe(&y);
        }
    }
    let verdict = if samples == 0 || worst >= 0.0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    report.checks.push(AssumptionCheck {
        name: "2(e)".into(),
        verdict,
        margin: (samples > 0).then_some(worst),
        detail: format!("kappa={kappa}, M={m:.6}, {samples} samples with |x| >= M"),
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::shipped;

    #[test]
    fn beverton_holt_passes_with_m_four() {
        let m = shipped::beverton_holt_1d();
        let r = validate_assumptions(&m, &Region::new(vec![0.01], vec![5.0]), 0.01);
        assert!(r.error.is_none());
        assert_eq!(r.radius_m, 4.0);
        assert_eq!(r.check("2(e)").unwrap().verdict, Verdict::Pass);
        assert_eq!(r.check("2(c)").unwrap().verdict, Verdict::Pass);
        assert!(r.all_passed(), "{r:#?}");
    }

    #[test]
    fn subcritical_ricker_fails_repulsion() {
        let m = ModelSpec::ricker(vec![-1.0], vec![vec![1.0]]).unwrap();
        let r = validate_assumptions(&m, &Region::new(vec![0.01], vec![5.0]), 0.01);
        assert_eq!(r.check("2(c)").unwrap().verdict, Verdict::Fail);
        assert!(!r.all_passed());
    }

    #[test]
    fn degenerate_region_is_reported() {
        let m = shipped::beverton_holt_1d();
        let r = validate_assumptions(&m, &Region::new(vec![1.0], vec![1.0]), 0.1);
        assert!(r.error.is_some());
        let r = validate_assumptions(&m, &Region::new(vec![0.0, 0.0], vec![1.0, 1.0]), 0.1);
        assert!(r.error.is_some());
    }

    #[test]
    fn two_dimensional_models_pass_on_bounded_regions() {
        let cases = [
            (shipped::competition_ricker_2d(), 1.5),
            (shipped::bistable_ricker_2d(), 4.0),
        ];
        for (m, side) in cases {
            let r = validate_assumptions(&m, &Region::new(vec![0.0, 0.0], vec![side, side]), 0.05);
            assert!(r.all_passed(), "{r:#?}");
        }
    }

    #[test]
    fn competition_breaks_repulsion_far_out() {
        // e^{1 - x_2/2} < 1 once the competitor exceeds 2.
        let m = shipped::competition_ricker_2d();
        let r = validate_assumptions(&m, &Region::new(vec![0.0, 0.0], vec![3.0, 3.0]), 0.1);
        assert_eq!(r.check("2(c)").unwrap().verdict, Verdict::Fail);
    }
}
