mod common;

use proptest::prelude::*;
use quasistat::model::shipped;
use quasistat::qsd::{
    conditioned_power_iteration, survival_rate, tightness_diagnostic, total_variation, uniform_start,
    KernelOptions, RedirectPolicy, TruncatedKernel,
};

fn check_against_oracle(k: &TruncatedKernel) {
    let q = conditioned_power_iteration(k, &uniform_start(k), 1e-14, 1_000_000).unwrap();
    let (rho, oracle) = common::dense_perron(k);
    assert!(total_variation(&q.mu, &oracle) < 1e-9, "TV {}", total_variation(&q.mu, &oracle));
    assert!((q.per_step_survival - rho).abs() < 1e-10);
}

#[test]
fn one_dimensional_kernels_match_dense_perron() {
    let m = shipped::beverton_holt_1d();
    for n in [3u64, 6, 8] {
        check_against_oracle(&TruncatedKernel::build(&m, n, 4.0, &KernelOptions::default()).unwrap());
    }
}

#[test]
fn two_dimensional_kernels_match_dense_perron() {
    let m = shipped::competition_ricker_2d();
    for policy in [RedirectPolicy::Absorb, RedirectPolicy::Project] {
        let opts = KernelOptions { policy, ..KernelOptions::default() };
        check_against_oracle(&TruncatedKernel::build(&m, 4, 2.0, &opts).unwrap());
    }
}

#[test]
fn survival_rate_agrees_with_estimate() {
    let m = shipped::beverton_holt_1d();
    let k = TruncatedKernel::build(&m, 10, 5.0, &KernelOptions::default()).unwrap();
    let q = conditioned_power_iteration(&k, &uniform_start(&k), 1e-14, 1_000_000).unwrap();
    let s = survival_rate(q.per_step_survival, 10);
    assert!((s.lambda_n - q.lambda_n).abs() < 1e-14);
    assert!((s.one_minus_lambda - q.one_minus_lambda).abs() < 1e-14);
    assert!(s.rate > 0.0);
}

#[test]
fn tails_shrink_with_radius() {
    let m = shipped::beverton_holt_1d();
    let est: Vec<_> = [5u64, 10, 20]
        .iter()
        .map(|&n| {
            let k = TruncatedKernel::build(&m, n, 5.0, &KernelOptions::default()).unwrap();
            conditioned_power_iteration(&k, &uniform_start(&k), 1e-13, 1_000_000).unwrap()
        })
        .collect();
    let t = tightness_diagnostic(&est, &[1.5, 2.0, 3.0, 4.0]);
    assert!(t.decreasing_in_r);
    assert!(t.sup_tail[3] < 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rows_conserve_mass(n in 2u64..12, r in 1.0f64..4.0) {
        let m = shipped::beverton_holt_1d();
        let k = TruncatedKernel::build(&m, n, r, &KernelOptions::default()).unwrap();
        for i in 0..k.len() {
            prop_assert!((k.row_sum(i) + k.killed(i) - 1.0).abs() < 1e-12);
            prop_assert!(k.row(i).all(|(_, p)| p >= 0.0));
        }
    }

    #[test]
    fn projection_keeps_overflow_inside(n in 2u64..6) {
        let m = shipped::competition_ricker_2d();
        let opts = KernelOptions { policy: RedirectPolicy::Project, ..KernelOptions::default() };
        let k = TruncatedKernel::build(&m, n, 1.5, &opts).unwrap();
        for i in 0..k.len() {
            prop_assert!((k.row_sum(i) + k.killed(i) - 1.0).abs() < 1e-12);
            prop_assert!(k.leak[i].abs() < 1e-12);
        }
    }
}
