//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use quasistat::flow::{chain_recurrence, RecurrenceParams, RecurrenceReport};
use quasistat::grid::{BoxRegion, Grid};
use quasistat::ldp::{compare_classes, quasipotential_field, v_chain_classes, QuasipotentialParams, VClassReport};
use quasistat::model::{local_rate, log_mgf_limit, log_mgf_prelimit, shipped};
use quasistat::qsd::{
    conditioned_power_iteration, extinction_law_test, fleming_viot_estimate, foster_search, point_start,
    support_concentration, total_variation, uniform_start, FlemingViotOptions, KernelOptions, QsdEstimate,
    TruncatedKernel,
};
use quasistat::simulate::lln_deviation_samples;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn bh_qsd(n: u64) -> Result<(TruncatedKernel, QsdEstimate), String> {
    let m = shipped::beverton_holt_1d();
    let k = TruncatedKernel::build(&m, n, 5.0, &KernelOptions::default()).map_err(|e| e.to_string())?;
    let q = conditioned_power_iteration(&k, &uniform_start(&k), 1e-14, 2_000_000).map_err(|e| e.to_string())?;
    Ok((k, q))
}

fn bh_recurrence() -> Result<RecurrenceReport, String> {
    chain_recurrence(
        &shipped::beverton_holt_1d(),
        &BoxRegion::new(vec![0.0], vec![3.0]),
        &RecurrenceParams::new(0.02, 0.05, 2.0),
    )
    .map_err(|e| e.to_string())
}

fn c1_rate_identity() -> Outcome {
    let models = [
        (shipped::beverton_holt_1d(), BoxRegion::new(vec![0.0], vec![3.0])),
        (shipped::competition_ricker_2d(), BoxRegion::cube(2, 0.0, 1.5)),
        (shipped::bistable_ricker_2d(), BoxRegion::cube(2, 0.0, 5.0)),
    ];
    let mut worst_flow: f64 = 0.0;
    for (m, region) in &models {
        let per_axis = if m.d() == 1 { 1000 } else { 32 };
        let step = (region.upper[0] - region.lower[0]) / (per_axis - 1) as f64;
        let grid = Grid::new(region, step).map_err(|e| e.to_string())?;
        for x in grid.points() {
            let g = m.drift(&x).map_err(|e| e.to_string())?;
            let l = local_rate(m, &x, &g).map_err(|e| e.to_string())?;
            worst_flow = worst_flow.max(l.value());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_oracle: f64 = 0.0;
    for q in 0..1000 {
        let (m, region) = &models[q % 3];
        let x: Vec<f64> = (0..m.d()).map(|i| rng.random_range(0.05..region.upper[i])).collect();
        let beta: Vec<f64> = (0..m.d()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let f = m.birth(&x);
        let oracle: f64 = (0..m.d()).map(|i| common::scalar_rate(f[i], x[i], beta[i])).sum();
        let l = local_rate(m, &x, &beta).map_err(|e| e.to_string())?;
        if !l.is_finite() {
            return Ok((false, format!("finite query returned infinite rate at x={x:?}, beta={beta:?}")));
        }
        worst_oracle = worst_oracle.max((l.value() - oracle).abs());
    }
    Ok((
        worst_flow <= 1e-10 && worst_oracle <= 1e-6,
        format!("max L(x,G(x)) = {worst_flow:.3e}, max |L − oracle| = {worst_oracle:.3e}"),
    ))
}

fn c2_mgf_convergence() -> Outcome {
    let m = shipped::beverton_holt_1d();
    let ns = [10u64, 100, 1000, 10000];
    let mut sups = Vec::new();
    for &n in &ns {
        let mut sup: f64 = 0.0;
        for k in 0..21 {
            let z = [-1.0 + 0.1 * k as f64];
            let a = log_mgf_prelimit(&m, &[1.0], &z, n).map_err(|e| e.to_string())?;
            let b = log_mgf_limit(&m, &[1.0], &z).map_err(|e| e.to_string())?;
            sup = sup.max((a - b).abs());
        }
        sups.push(sup);
    }
    let decreasing = sups.windows(2).all(|w| w[1] < w[0]);
    Ok((decreasing && sups[3] < 1e-3, format!("sup |H^N − H| over N = {ns:?}: {}", sci(&sups))))
}

fn c3_qsd_fixed_point() -> Outcome {
    let (k, q) = bh_qsd(10)?;
    let (_, oracle) = common::dense_perron(&k);
    let tv_oracle = total_variation(&q.mu, &oracle);
    let q2 = conditioned_power_iteration(&k, &point_start(&k, k.len() - 1), 1e-14, 2_000_000).map_err(|e| e.to_string())?;
    let tv_start = total_variation(&q.mu, &q2.mu);
    Ok((
        q.residual_tv < 1e-10 && tv_oracle < 1e-8 && tv_start < 1e-8,
        format!(
            "{} states, residual {:.2e}, TV to dense oracle {:.2e}, TV between starts {:.2e}",
            k.len(),
            q.residual_tv,
            tv_oracle,
            tv_start
        ),
    ))
}

fn c4_survival_scaling() -> Outcome {
    let ns = [5u64, 10, 20, 40];
    let mut gaps = Vec::new();
    for &n in &ns {
        gaps.push(bh_qsd(n)?.1.one_minus_lambda);
    }
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let y: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    let (slope, _, r2) = common::linear_fit(&x, &y);
    Ok((
        decreasing && slope < 0.0 && r2 > 0.9,
        format!("1 − λ_N = {}, slope {slope:.4}, R² {r2:.4}", sci(&gaps)),
    ))
}

fn c5_concentration() -> Outcome {
    let report = bh_recurrence()?;
    let qa = report
        .classes
        .iter()
        .position(|c| c.quasiattractor)
        .ok_or("no interior quasiattractor")?;
    let mut mass = Vec::new();
    for n in [5u64, 10, 20, 40] {
        let (k, q) = bh_qsd(n)?;
        mass.push(support_concentration(&k, &q.mu, &report, 0.2).class_mass[qa]);
    }
    let increasing = mass.windows(2).all(|w| w[1] > w[0]);
    Ok((
        increasing && mass[3] > 0.9,
        format!("μ_N mass within 0.2 of the attractor for N = 5,10,20,40: {mass:.4?}"),
    ))
}

fn c6_lln() -> Outcome {
    let m = shipped::beverton_holt_1d();
    let mut medians = Vec::new();
    let mut frac = 0.0;
    for n in [25u64, 50, 100, 200] {
        let d = lln_deviation_samples(&m, &[1.0], n, 5.0, 200, 6).map_err(|e| e.to_string())?;
        medians.push(common::median(&d));
        frac = d.iter().filter(|&&v| v < 0.15).count() as f64 / d.len() as f64;
    }
    let non_increasing = medians.windows(2).all(|w| w[1] <= w[0]);
    Ok((
        non_increasing && frac >= 0.9,
        format!("median D for N = 25,50,100,200: {medians:.4?}; P(D < 0.15) at N=200 = {frac:.3}"),
    ))
}

fn kinds(v: &VClassReport) -> (usize, usize) {
    let qa = v.classes.iter().filter(|c| c.quasiattractor).count();
    (qa, v.classes.len() - qa)
}

fn c7_chain_recurrence() -> Outcome {
    let bh = shipped::beverton_holt_1d();
    let ap1 = bh_recurrence()?;
    let v1 = v_chain_classes(&bh, &BoxRegion::new(vec![0.0], vec![3.0]), &QuasipotentialParams::new(0.02), 1e-3)
        .map_err(|e| e.to_string())?;
    let one_d = ap1.classes.len() == 1
        && v1.classes.len() == 1
        && ap1.classes[0].distance_to(&[1.0]) <= 0.02
        && v1.classes[0].distance_to(&[1.0]) <= 0.02
        && compare_classes(&v1.classes, &ap1.classes, 0.02).consistent;

    let bi = shipped::bistable_ricker_2d();
    let region = BoxRegion::cube(2, 0.0, 5.0);
    let ap2 = chain_recurrence(&bi, &region, &RecurrenceParams::new(0.05, 0.06, 3.0)).map_err(|e| e.to_string())?;
    let v2 = v_chain_classes(&bi, &region, &QuasipotentialParams::new(0.05), 1e-3).map_err(|e| e.to_string())?;
    let cmp = compare_classes(&v2.classes, &ap2.classes, 0.05);
    let ap_kinds = {
        let qa = ap2.quasiattractors().count();
        (qa, ap2.classes.len() - qa)
    };
    let v_kinds = kinds(&v2);
    let map = |i: usize| cmp.matches.iter().find(|m| m.v_class == i).map(|m| m.ap_class);
    let mut mapped: Vec<(usize, usize)> = v2
        .dag_edges
        .iter()
        .filter_map(|&(a, b)| Some((map(a)?, map(b)?)))
        .collect();
    mapped.sort();
    let mut ap_edges = ap2.dag_edges.clone();
    ap_edges.sort();
    let two_d = ap_kinds == (2, 1) && v_kinds == (2, 1) && cmp.consistent && mapped == ap_edges && ap_edges.len() == 2;
    Ok((
        one_d && two_d,
        format!(
            "1-d: AP {} / V {} classes near x*; 2-d: AP (sinks, other) = {ap_kinds:?}, V = {v_kinds:?}, matched {}, DAG AP {:?} vs V {:?}",
            ap1.classes.len(),
            v1.classes.len(),
            cmp.consistent,
            ap_edges,
            mapped
        ),
    ))
}

fn c8_quasipotential() -> Outcome {
    let m = shipped::beverton_holt_1d();
    let f = quasipotential_field(&m, &BoxRegion::new(vec![0.0], vec![2.0]), &[1.0], &QuasipotentialParams::new(0.01))
        .map_err(|e| e.to_string())?;
    let v = f.value_at(&[0.5]).ok_or("0.5 outside grid")?;
    let oracle = common::adaptive_simpson(&|s| (m.birth(&[s])[0] / s).ln(), 0.5, 1.0, 1e-12);
    let rel = (v - oracle).abs() / oracle;
    Ok((rel < 0.1, format!("graph V = {v:.5}, integral = {oracle:.5}, relative error {rel:.3}")))
}

fn c9_foster() -> Outcome {
    let (k, _) = bh_qsd(10)?;
    let r_list: Vec<f64> = (0..=6).map(|i| 2.0 + 0.5 * i as f64).collect();
    let (found, tried) = foster_search(&k, 2.0, &r_list, 20).map_err(|e| e.to_string())?;
    let first = &tried[0];
    let detail = match found {
        Some(i) => format!(
            "certificate at r={}, θ1={:.4}, θ2={:.4}, c1={:.3}",
            tried[i].r,
            tried[i].theta1,
            tried[i].theta2,
            tried[i].c1.unwrap_or(f64::NAN)
        ),
        None => format!(
            "no certificate in {} attempts; realized θ2 = {:.4}, spectral radius outside K_r at r={} = {:.4}; {}",
            tried.len(),
            first.realized_theta2,
            first.r,
            first.spectral_radius_outside,
            first.note.clone().unwrap_or_default()
        ),
    };
    Ok((found.is_some() && first.realized_theta2 > 0.0, detail))
}

fn c10_fleming_viot() -> Outcome {
    let m = shipped::beverton_holt_1d();
    let (k, q) = bh_qsd(10)?;
    let opts = FlemingViotOptions {
        particles: 10_000,
        steps: 10_000,
        seed: 10,
        start: vec![1.0],
        burn_in: 0.1,
    };
    let fv = fleming_viot_estimate(&m, 10, &opts).map_err(|e| e.to_string())?;
    let tv = fv.tv_to(&k, &q.mu);
    Ok((
        tv < 0.05,
        format!("TV(Fleming–Viot, exact) = {tv:.4}; survival {:.6} vs {:.6}", fv.per_step_survival, q.per_step_survival),
    ))
}

fn c11_extinction_law() -> Outcome {
    let m = shipped::beverton_holt_1d();
    let (k, q) = bh_qsd(10)?;
    let rep = extinction_law_test(&m, &k, &q, 100_000, 20, 11).map_err(|e| e.to_string())?;
    Ok((
        rep.p_value > 0.01,
        format!(
            "N=10: χ² = {:.2} on {} dof, p = {:.4}, mean {:.2} vs {:.2}",
            rep.chi_square, rep.dof, rep.p_value, rep.mean_observed, rep.mean_expected
        ),
    ))
}

fn main() {
    // `cargo test -- --list` and filters address the harnessed targets; only run on a plain invocation
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [Criterion; 11] = [
        ("rate-function identity", c1_rate_identity, Duration::from_secs(5)),
        ("MGF convergence", c2_mgf_convergence, Duration::from_secs(1)),
        ("QSD fixed point and oracle", c3_qsd_fixed_point, Duration::from_secs(10)),
        ("survival-rate scaling", c4_survival_scaling, Duration::from_secs(300)),
        ("QSD concentration", c5_concentration, Duration::from_secs(300)),
        ("law of large numbers", c6_lln, Duration::from_secs(120)),
        ("chain recurrence", c7_chain_recurrence, Duration::from_secs(180)),
        ("quasipotential oracle", c8_quasipotential, Duration::from_secs(60)),
        ("Foster criterion", c9_foster, Duration::from_secs(10)),
        ("Fleming–Viot vs exact QSD", c10_fleming_viot, Duration::from_secs(120)),
        ("extinction law", c11_extinction_law, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        let slow = if took > *budget { " (over runtime budget)" } else { "" };
        println!(
            "criterion {:>2} {} : {} [{:.1}s{}] {}",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            name,
            took.as_secs_f64(),
            slow,
            detail
        );
    }
    println!("acceptance: {} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
