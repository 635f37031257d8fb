//! Experiment pipelines.

use quasistat::flow::{chain_recurrence, integrate_flow, RecurrenceParams, RecurrenceReport};
use quasistat::ldp::{compare_classes, quasipotential_field, v_chain_classes, QuasipotentialParams};
use quasistat::model::validate_assumptions;
use quasistat::qsd::{
    conditioned_power_iteration, support_concentration, survival_rate, tightness_diagnostic, uniform_start,
    KernelOptions, QsdEstimate, TruncatedKernel,
};
use quasistat::rng::StreamKey;
use quasistat::simulate::{lln_deviation_samples, run_chain, RunOptions};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::CliError;
use crate::manifest::Artifacts;

pub fn run(exp: Experiment, cfg: &ExperimentConfig, seed: u64, out: &mut Artifacts) -> Result<(), CliError> {
    match exp {
        Experiment::Validate => validate(cfg, out),
        Experiment::Simulate => simulate(cfg, seed, out),
        Experiment::Qsd => qsd(cfg, out).map(|_| ()),
        Experiment::Flow => flow(cfg, out).map(|_| ()),
        Experiment::Quasipotential => quasipotential(cfg, out),
        Experiment::Scaling => scaling(cfg, out),
    }
}

fn validate(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let report = validate_assumptions(&cfg.model, &cfg.region(), cfg.scale.grid_step);
    out.write_json("validation.json", &report, false)
}

#[derive(Serialize)]
struct SimulationSummary {
    n: u64,
    start: Vec<f64>,
    steps: usize,
    replicates: usize,
    extinct_fraction: f64,
    mean_final: Vec<f64>,
    lln_horizon: f64,
    lln_median: f64,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

fn simulate(cfg: &ExperimentConfig, seed: u64, out: &mut Artifacts) -> Result<(), CliError> {
    let s = &cfg.scale;
    let x0 = cfg.x0();
    let mut summary = Vec::new();
    for &n in &s.n {
        let steps = (s.horizon * n as f64).ceil() as usize;
        // nearest lattice point of (1/N)Z^d
        let x0: Vec<f64> = x0.iter().map(|v| (v * n as f64).round() / n as f64).collect();
        let paths: Vec<_> = (0..s.replicates)
            .into_par_iter()
            .map(|r| run_chain(&cfg.model, &x0, n, &RunOptions::new(steps), StreamKey::new(seed, r as u64)))
            .collect::<Result<_, _>>()?;
        out.write(&format!("path_n{n}_rep0.csv"), paths[0].to_csv().as_bytes(), true)?;
        let d = cfg.model.d();
        let mut mean_final = vec![0.0; d];
        for p in &paths {
            for (m, v) in mean_final.iter_mut().zip(p.state(p.len() - 1)) {
                *m += v / paths.len() as f64;
            }
        }
        let extinct = paths.iter().filter(|p| p.extinct_at.is_some()).count();
        let dev = lln_deviation_samples(&cfg.model, &x0, n, s.horizon, s.replicates, seed)?;
        let mut csv = String::from("replicate,deviation\n");
        for (r, v) in dev.iter().enumerate() {
            csv.push_str(&format!("{r},{v}\n"));
        }
        out.write(&format!("lln_n{n}.csv"), csv.as_bytes(), true)?;
        summary.push(SimulationSummary {
            n,
            start: x0.clone(),
            steps,
            replicates: s.replicates,
            extinct_fraction: extinct as f64 / paths.len() as f64,
            mean_final,
            lln_horizon: s.horizon,
            lln_median: median(&dev),
        });
    }
    out.write_json("simulation.json", &summary, true)
}

fn qsd_csv(kernel: &TruncatedKernel, q: &QsdEstimate) -> String {
    let d = kernel.dim();
    let mut s: String = (1..=d).map(|i| format!("count_{i},")).collect();
    s.extend((1..=d).map(|i| format!("x_{i},")));
    s.push_str("mu\n");
    for (i, w) in q.mu.iter().enumerate() {
        for c in &kernel.states[i] {
            s.push_str(&format!("{c},"));
        }
        for x in kernel.point(i) {
            s.push_str(&format!("{x},"));
        }
        s.push_str(&format!("{w}\n"));
    }
    s
}

#[derive(Serialize)]
struct QsdRow {
    n: u64,
    states: usize,
    iterations: usize,
    residual_tv: f64,
    per_step_survival: f64,
    lambda_n: f64,
    one_minus_lambda: f64,
    rate: f64,
    warnings: Vec<String>,
}

fn qsd(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Vec<(TruncatedKernel, QsdEstimate)>, CliError> {
    let s = &cfg.scale;
    let opts = KernelOptions {
        policy: s.policy,
        max_states: s.max_states,
    };
    let mut runs = Vec::new();
    let mut table = Vec::new();
    let mut csv = String::from("n,per_step_survival,lambda_n,one_minus_lambda,rate\n");
    for &n in &s.n {
        let k = TruncatedKernel::build(&cfg.model, n, s.r, &opts)?;
        let q = conditioned_power_iteration(&k, &uniform_start(&k), s.tolerance, s.max_iterations)?;
        out.write(&format!("qsd_n{n}.csv"), qsd_csv(&k, &q).as_bytes(), false)?;
        let sr = survival_rate(q.per_step_survival, n);
        csv.push_str(&format!("{n},{},{},{},{}\n", q.per_step_survival, sr.lambda_n, sr.one_minus_lambda, sr.rate));
        table.push(QsdRow {
            n,
            states: k.len(),
            iterations: q.iterations,
            residual_tv: q.residual_tv,
            per_step_survival: q.per_step_survival,
            lambda_n: sr.lambda_n,
            one_minus_lambda: sr.one_minus_lambda,
            rate: sr.rate,
            warnings: k.warnings.clone(),
        });
        runs.push((k, q));
    }
    out.write("survival.csv", csv.as_bytes(), false)?;
    out.write_json("qsd.json", &table, false)?;
    let ests: Vec<QsdEstimate> = runs.iter().map(|(_, q)| q.clone()).collect();
    let radii: Vec<f64> = (1..=4).map(|i| s.r * i as f64 / 5.0).collect();
    out.write_json("tightness.json", &tightness_diagnostic(&ests, &radii), false)?;
    Ok(runs)
}

fn flow(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<RecurrenceReport, CliError> {
    let s = &cfg.scale;
    let path = integrate_flow(&cfg.model, &cfg.x0(), s.horizon, s.flow_step)?;
    let d = cfg.model.d();
    let mut csv = String::from("t");
    csv.extend((1..=d).map(|i| format!(",x_{i}")));
    csv.push('\n');
    for (t, x) in path.times.iter().zip(&path.samples) {
        csv.push_str(&t.to_string());
        for v in x {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    out.write("flow.csv", csv.as_bytes(), false)?;
    let mut params = RecurrenceParams::new(s.grid_step, s.delta, s.flight_time);
    params.flow_step = s.flow_step;
    let report = chain_recurrence(&cfg.model, &cfg.region(), &params)?;
    out.write_json("recurrence.json", &report, false)?;
    Ok(report)
}

fn quasipotential(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let s = &cfg.scale;
    let params = QuasipotentialParams::new(s.grid_step);
    let field = quasipotential_field(&cfg.model, &cfg.region(), &cfg.x0(), &params)?;
    out.write("quasipotential.csv", field.to_csv().as_bytes(), false)?;
    let classes = v_chain_classes(&cfg.model, &cfg.region(), &params, s.eps_v)?;
    out.write_json("v_classes.json", &classes, false)
}

#[derive(Serialize)]
struct Overlay {
    n: u64,
    source: Vec<f64>,
}

/// validate → recurrence → kernels and QSDs over the N list → λ_N table →
/// support concentration → quasipotential overlay.
fn scaling(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let s = &cfg.scale;
    validate(cfg, out)?;
    let mut params = RecurrenceParams::new(s.grid_step, s.delta, s.flight_time);
    params.flow_step = s.flow_step;
    let report = chain_recurrence(&cfg.model, &cfg.region(), &params)?;
    out.write_json("recurrence.json", &report, false)?;
    let runs = qsd(cfg, out)?;
    let conc: Vec<_> = runs
        .iter()
        .map(|(k, q)| (k.n, support_concentration(k, &q.mu, &report, s.concentration_eps)))
        .collect();
    out.write_json("concentration.json", &conc, false)?;

    let source = report
        .quasiattractors()
        .next()
        .map(|c| c.centroid())
        .unwrap_or_else(|| cfg.x0());
    let qp = QuasipotentialParams::new(s.grid_step);
    let field = quasipotential_field(&cfg.model, &cfg.region(), &source, &qp)?;
    out.write("quasipotential.csv", field.to_csv().as_bytes(), false)?;
    let v = v_chain_classes(&cfg.model, &cfg.region(), &qp, s.eps_v)?;
    out.write_json("class_comparison.json", &compare_classes(&v.classes, &report.classes, s.grid_step), false)?;

    // −ln μ_N / N against V at the largest N
    let (k, q) = runs.last().expect("at least one system size");
    let d = k.dim();
    let mut csv: String = (1..=d).map(|i| format!("x_{i},")).collect();
    csv.push_str("mu,neg_log_mu_over_n,v\n");
    for (i, w) in q.mu.iter().enumerate() {
        let x = k.point(i);
        for c in &x {
            csv.push_str(&format!("{c},"));
        }
        let v = field.value_at(&x).unwrap_or(f64::INFINITY);
        csv.push_str(&format!("{w},{},{v}\n", -w.ln() / k.n as f64));
    }
    out.write("overlay.csv", csv.as_bytes(), false)?;
    out.write_json("overlay.json", &Overlay { n: k.n, source }, false)
}
