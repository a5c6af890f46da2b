//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).
//!
//! The experiments are desk-scale versions of the headline claims: temporal
//! strong order one half, the degenerate-noise maximum bound, additive-noise
//! blow-up, energy convergence in the regularization parameter, the small-
//! noise deterministic limit, and the averaged energy evolution law.

use std::sync::Arc;

use logsac::diagnostics::{self, bound_violation_probability};
use logsac::harness::config::{DiffusionKind, ExperimentConfig, ExperimentKind, NoiseCaseKind};
use logsac::harness::ensemble::{estimate_order, run_ensemble, strong_error_ladder, OrderPoint};
use logsac::harness::experiments;
use logsac::harness::initial::initial_condition;
use logsac::noise::{mode_weights, NoisePath, NoiseSpec};
use logsac::potential::{
    eval_f1_kappa, eval_flog, eval_flog1_prime, eval_flog_delta, eval_flog_delta_prime,
    BoundFunctionalParams, PotentialParams,
};
use logsac::solver::{RunOptions, Scheme, SolverConfig};
use logsac::spectral::{basis_function, BoundaryCondition, Field, SpectralBasis};

fn report(name: &str, pass: bool, detail: &str) {
    println!("ACCEPTANCE {name}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn fig1_solver_config(delta: f64, tau: f64, t_final: f64, seed: u64) -> SolverConfig {
    SolverConfig {
        sigma: 1.0,
        tau,
        t_final,
        alpha: 2.0,
        potential: PotentialParams::new(delta, 1.5).unwrap(),
        noise: NoiseSpec::nemytskii_sin2(1.0).unwrap(),
        n_modes: 32,
        dealias: false,
        scheme: Scheme::StabilizedSemiImplicit,
        seed,
        blowup_threshold: 1e3,
        delta0: None,
    }
}

/// Criterion 1: strong temporal order 1/2 on the Neumann basis at N = 32,
/// c = 3/2, alpha = 2, sigma = 1, eps = 1, Case 2 noise, T = 0.1, with the
/// coupled ladder {4e-3, 2e-3, 1e-3, 5e-4} against tau_ref = 6.25e-5 and
/// M = 100 realizations. (The nominal 8e-3 entry does not divide T = 0.1 and
/// is dropped; all retained entries are integer multiples of tau_ref.)
fn temporal_order_for_delta(label: &str, delta: f64) {
    let basis = SpectralBasis::neumann(32).unwrap();
    let u0 = initial_condition("fig1", &basis).unwrap();
    let cfg = fig1_solver_config(delta, 1e-3, 0.1, 9001);
    let ladder = [4e-3, 2e-3, 1e-3, 5e-4];
    let raw = strong_error_ladder(&cfg, &u0, &ladder, 6.25e-5, 100).unwrap();
    let points: Vec<OrderPoint> = raw
        .iter()
        .map(|&(tau, (error, stderr))| OrderPoint { tau, error, stderr })
        .collect();
    let decreasing = points.windows(2).all(|p| p[1].error < p[0].error);
    let fit = estimate_order(&points).unwrap();
    let pass = decreasing && (0.35..=0.65).contains(&fit.slope);
    let errs: Vec<String> = points.iter().map(|p| format!("{:.3e}", p.error)).collect();
    report(
        &format!("1 temporal order (delta={label})"),
        pass,
        &format!(
            "slope {:.3} in [0.35, 0.65], errors [{}] strictly decreasing: {decreasing}",
            fit.slope,
            errs.join(", ")
        ),
    );
}

#[test]
fn acceptance_1a_temporal_order_delta_1e4() {
    temporal_order_for_delta("1e-4", 1e-4);
}

#[test]
fn acceptance_1b_temporal_order_delta_01() {
    temporal_order_for_delta("0.1", 0.1);
}

#[test]
fn acceptance_1c_temporal_order_delta_1e18() {
    temporal_order_for_delta("1e-18", 1e-18);
}

/// Criterion 2: with the degenerate Case 2 noise at delta = 1e-18, tau = 1e-3,
/// T = 10 and M = 100, the bound-violation probability at delta0 = 0.05 is
/// exactly zero.
#[test]
fn acceptance_2_maximum_bound() {
    let basis = SpectralBasis::neumann(32).unwrap();
    let u0 = initial_condition("fig1", &basis).unwrap();
    let cfg = fig1_solver_config(1e-18, 1e-3, 10.0, 9002);
    let records = run_ensemble(&cfg, &u0, 100, &RunOptions::default()).unwrap();
    let outcomes: Vec<(f64, bool)> =
        records.iter().map(|r| (r.max_sup_norm(), r.blown_up)).collect();
    let est = bound_violation_probability(&outcomes, 0.05).unwrap();
    let max_sup = outcomes.iter().fold(0.0f64, |m, o| m.max(o.0));
    report(
        "2 maximum bound (Case 2)",
        est.n_violating == 0,
        &format!(
            "{} of {} realizations exceeded 1.05 (max sup {:.4}); Wilson 95% [{:.4}, {:.4}]",
            est.n_violating, est.n_total, max_sup, est.lo, est.hi
        ),
    );
}

/// Criterion 3: additive noise at eps = 1 blows up in finite time; at least
/// one of 10 realizations must trigger the signal before T = 50.
#[test]
fn acceptance_3_blowup_additive() {
    let basis = SpectralBasis::neumann(32).unwrap();
    let u0 = initial_condition("fig1", &basis).unwrap();
    let mut cfg = fig1_solver_config(1e-18, 1e-3, 50.0, 9003);
    cfg.noise = NoiseSpec::additive(1.0).unwrap();
    let records = run_ensemble(&cfg, &u0, 10, &RunOptions::default()).unwrap();
    let blowups: Vec<f64> = records.iter().filter_map(|r| r.blowup_time).collect();
    let pass = !blowups.is_empty() && blowups.iter().all(|t| t.is_finite() && *t < 50.0 + 1e-9);
    let first = blowups.iter().cloned().fold(f64::INFINITY, f64::min);
    report(
        "3 additive-noise blow-up",
        pass,
        &format!("{} of 10 realizations blew up, first at t = {first:.3}", blowups.len()),
    );
}

/// Criterion 4: delta-ladder energy convergence with common noise at
/// sigma = 0.1, eps = 1e-4, tau = 1e-2, T = 20, M = 50. Successive gaps must
/// be non-increasing and the final gap below two MC standard errors.
///
/// The second clause cannot hold as stated: the modified energy of the
/// delta-model contains the arctan terms, which contribute a deterministic
/// pointwise offset ~ pi sqrt(delta) between columns, i.e. a gap floor of
/// |D| pi (sqrt(1e-8) - sqrt(1e-12)) ~ 1.24e-3 that no Monte Carlo standard
/// error at these parameters approaches (paired-ensemble stderr ~ 1e-9).
/// The clause is asserted as written and expected to fail; the first clause
/// carries the qualitative content.
#[test]
fn acceptance_4_delta_ladder_energy() {
    let cfg = ExperimentConfig {
        experiment: ExperimentKind::EnergyScan,
        bc: BoundaryCondition::Neumann,
        n_modes: 32,
        dealias: false,
        sigma: 0.1,
        tau: 1e-2,
        t_final: 20.0,
        alpha: 2.0,
        delta: 1e-2,
        c: 1.5,
        noise_case: NoiseCaseKind::Nemytskii,
        diffusion: DiffusionKind::Sin2Pi,
        epsilon: 1e-4,
        seed: 9004,
        realizations: 50,
        initial_condition: "fig4".to_string(),
        scheme: Scheme::StabilizedSemiImplicit,
        snapshot_times: vec![],
        tau_ladder: vec![],
        tau_ref: None,
        error_sup_over_time: false,
        delta_ladder: vec![1e-2, 1e-4, 1e-8, 1e-12],
        epsilon_ladder: vec![],
        delta0: None,
        blowup_threshold: 1e3,
        output_dir: tempfile::tempdir().unwrap().keep(),
    };
    let summary = experiments::energy_scan(&cfg).unwrap();
    let gaps: Vec<f64> = summary.gaps.iter().map(|g| g.gap).collect();
    let non_increasing = gaps.windows(2).all(|w| w[1] <= w[0]);
    report(
        "4a delta-ladder gaps non-increasing",
        non_increasing,
        &format!("gaps {gaps:?}"),
    );
    let last = summary.gaps.last().unwrap();
    let pass = last.gap < 2.0 * last.stderr_at_argmax;
    report(
        "4b final gap below 2 MC standard errors",
        pass,
        &format!(
            "gap(1e-8 -> 1e-12) = {:.4e} vs 2 se = {:.4e} paired / {:.4e} independent-reading \
             (the arctan terms of the regularized potential give the energy a deterministic \
             pointwise offset ~ pi (sqrt(1e-8) - sqrt(1e-12)), a gap floor of |D| pi dsqrt ~ 1.24e-3 \
             that no MC standard error at these parameters approaches)",
            last.gap,
            2.0 * last.stderr_at_argmax,
            2.0 * last.stderr_indep_at_argmax
        ),
    );
}

/// Criterion 5: small-noise deterministic limit on the periodic basis at
/// N = 64, sigma = 0.01, delta = 1e-18, tau = 1e-3, T = 20. The eps = 1e-10
/// energy curve stays within 10 tau (1 + max |E_det|) of the ETDRK2 run; the
/// eps = 1e-2 curve leaves that tube.
#[test]
fn acceptance_5_deterministic_limit() {
    let cfg = ExperimentConfig {
        experiment: ExperimentKind::Coarsen,
        bc: BoundaryCondition::Periodic,
        n_modes: 64,
        dealias: false,
        sigma: 0.01,
        tau: 1e-3,
        t_final: 20.0,
        alpha: 2.0,
        delta: 1e-18,
        c: 1.5,
        noise_case: NoiseCaseKind::Nemytskii,
        diffusion: DiffusionKind::Sin2Pi,
        epsilon: 1.0,
        seed: 9005,
        realizations: 1,
        initial_condition: "fig5".to_string(),
        scheme: Scheme::StabilizedSemiImplicit,
        snapshot_times: vec![5.0, 20.0],
        tau_ladder: vec![],
        tau_ref: None,
        error_sup_over_time: false,
        delta_ladder: vec![],
        epsilon_ladder: vec![1e-2, 1e-10],
        delta0: None,
        blowup_threshold: 1e3,
        output_dir: tempfile::tempdir().unwrap().keep(),
    };
    let summary = experiments::coarsen(&cfg).unwrap();
    let big = &summary.entries[0]; // eps = 1e-2
    let small = &summary.entries[1]; // eps = 1e-10
    let pass = small.within_tolerance && !big.within_tolerance;
    report(
        "5 small-noise deterministic limit",
        pass,
        &format!(
            "eps 1e-10 gap {:.3e} <= tol {:.3e}: {}; eps 1e-2 gap {:.3e} > tol: {}",
            small.max_energy_gap_vs_det,
            small.tolerance,
            small.within_tolerance,
            big.max_energy_gap_vs_det,
            !big.within_tolerance
        ),
    );
}

/// Criterion 6: averaged energy evolution law residual, Case 2 at N = 16,
/// tau = 1e-3, T = 0.5, M = 500, delta = 1e-2, eps = 0.1: every time point
/// satisfies |residual| <= 3 stderr + C tau with C fitted from the coupled
/// tau vs tau/2 pair.
#[test]
fn acceptance_6_energy_law() {
    let cfg = ExperimentConfig {
        experiment: ExperimentKind::EnergyLaw,
        bc: BoundaryCondition::Neumann,
        n_modes: 16,
        dealias: false,
        sigma: 1.0,
        tau: 1e-3,
        t_final: 0.5,
        alpha: 2.0,
        delta: 1e-2,
        c: 1.5,
        noise_case: NoiseCaseKind::Nemytskii,
        diffusion: DiffusionKind::Sin2Pi,
        epsilon: 0.1,
        seed: 9006,
        realizations: 500,
        initial_condition: "fig1".to_string(),
        scheme: Scheme::StabilizedSemiImplicit,
        snapshot_times: vec![],
        tau_ladder: vec![],
        tau_ref: None,
        error_sup_over_time: false,
        delta_ladder: vec![],
        epsilon_ladder: vec![],
        delta0: None,
        blowup_threshold: 1e3,
        output_dir: tempfile::tempdir().unwrap().keep(),
    };
    let result = experiments::energy_law(&cfg).unwrap();
    report(
        "6 averaged energy evolution law",
        result.summary.all_within_bound,
        &format!(
            "C_fit {:.3e}, max |residual|/(3 se + C tau) = {:.3}",
            result.summary.c_fit, result.summary.max_violation_ratio
        ),
    );
}

/// Criterion 7: the module property battery at its stated tolerances.
#[test]
fn acceptance_7_property_battery() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9007);
    let mut failures: Vec<String> = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };

    // potential: delta = 0 reduction, parity, derivative consistency
    let p0 = PotentialParams::new(0.0, 1.5).unwrap();
    for _ in 0..100 {
        let xi: f64 = rng.gen_range(-0.999..0.999);
        check(
            "delta-0 reduction",
            (eval_flog_delta(xi, &p0).unwrap() - eval_flog(xi, 1.5).unwrap()).abs() < 1e-15,
        );
    }
    let p = PotentialParams::new(1e-3, 1.5).unwrap();
    for _ in 0..100 {
        let xi: f64 = rng.gen_range(-2.0..2.0);
        let even = (eval_flog_delta(xi, &p).unwrap() - eval_flog_delta(-xi, &p).unwrap()).abs();
        let odd = (eval_flog_delta_prime(xi, &p).unwrap()
            + eval_flog_delta_prime(-xi, &p).unwrap())
        .abs();
        check("parity", even < 1e-12 && odd < 1e-12);
    }
    for &delta in &[1.0, 1e-2, 1e-4] {
        let p = PotentialParams::new(delta, 1.5).unwrap();
        for _ in 0..20 {
            let xi: f64 = rng.gen_range(-0.9..0.9);
            let h = 1e-4;
            let fd = (eval_flog_delta(xi + h, &p).unwrap() - eval_flog_delta(xi - h, &p).unwrap())
                / (2.0 * h);
            let an = eval_flog_delta_prime(xi, &p).unwrap();
            check("derivative consistency", (fd - an).abs() <= 1e-4 * (1.0 + an.abs()));
        }
    }
    // F_d1' bound: the exact supremum is ln(1 + sqrt(1+delta)) - ln(delta)/2
    // at xi = ±sqrt(1+delta), exceeding the nominal ln((4+delta)/delta)/2 by
    // O(delta); the nominal bound is asserted with a 1e-5 relative slack
    // where that covers the excess (delta <= 1e-4), the exact form always.
    for &delta in &[1e-2, 1e-4, 1e-6] {
        let p = PotentialParams::new(delta, 0.0).unwrap();
        let stated = 0.5 * ((4.0 + delta) / delta).ln();
        let exact = (1.0 + (1.0 + delta).sqrt()).ln() - 0.5 * delta.ln();
        let mut sup = 0.0f64;
        for i in 0..=20000 {
            let xi = -2.0 + 4.0 * i as f64 / 20000.0;
            sup = sup.max(eval_flog1_prime(xi, &p).unwrap().abs());
        }
        check("F_d1' exact bound", sup <= exact + 1e-12);
        if delta <= 1e-4 {
            check("F_d1' stated bound", sup <= stated * (1.0 + 1e-5));
        }
    }

    // f^j C2 matching across breakpoints
    let b = BoundFunctionalParams::new(0.4).unwrap();
    for &x0 in &[1.0, 1.4] {
        let h = 1e-6;
        let f = |x: f64| eval_f1_kappa(x, &b);
        let dl = (f(x0) - f(x0 - h)) / h;
        let dr = (f(x0 + h) - f(x0)) / h;
        let cl = (f(x0) - 2.0 * f(x0 - h) + f(x0 - 2.0 * h)) / (h * h);
        let cr = (f(x0 + 2.0 * h) - 2.0 * f(x0 + h) + f(x0)) / (h * h);
        check("f1 C2 breakpoints", (dl - dr).abs() < 1e-4 && (cl - cr).abs() < 1e-2);
    }

    // spectral: Parseval, round trip, eigen-relation
    for basis in [SpectralBasis::periodic(16).unwrap(), SpectralBasis::neumann(16).unwrap()] {
        let m = basis.grid_points();
        let values = ndarray::Array2::from_shape_fn((m, m), |_| rng.gen_range(-1.0..1.0));
        let u = Field::from_values(Arc::clone(&basis), values).unwrap();
        let c = basis.forward(&u).unwrap();
        check(
            "Parseval",
            (c.l2_norm_sq() - u.l2_norm_sq()).abs() <= 1e-10 * u.l2_norm_sq(),
        );
        let back = basis.inverse(&c).unwrap();
        let rt = u
            .values()
            .iter()
            .zip(back.values().iter())
            .fold(0.0f64, |acc, (a, bb)| acc.max((a - bb).abs()));
        check("round trip", rt < 1e-12);
        for &(a, bb) in &[(1usize, 2usize), (3, 0)] {
            let e = basis_function(&basis, a, bb).unwrap();
            let lap = basis.forward(&e).unwrap().laplacian().scaled(-1.0);
            let lam = basis.eigenvalues()[[a, bb]];
            let lg = basis.inverse(&lap).unwrap();
            let err = lg
                .values()
                .iter()
                .zip(e.values().iter())
                .fold(0.0f64, |acc, (x, y)| acc.max((x - lam * y).abs()));
            check("eigen-relation", err < 1e-8);
        }
    }

    // noise: chi-square variance and coupling additivity
    {
        let basis = SpectralBasis::neumann(4).unwrap();
        let tau = 1e-2;
        let n_draws = 10_000;
        let path = NoisePath::new(Arc::clone(&basis), 424242, tau, n_draws).unwrap();
        let q = mode_weights(&basis);
        let target = q[[1, 1]] * tau;
        let mut stat = 0.0;
        for j in 0..n_draws {
            let v = path.sample_increment(j).unwrap().data()[[1, 1]].re;
            stat += v * v / target;
        }
        let z = 2.5758293035489004f64;
        let dofs = n_draws as f64;
        let a = 2.0 / (9.0 * dofs);
        let lo = dofs * (1.0 - a - z * a.sqrt()).powi(3);
        let hi = dofs * (1.0 - a + z * a.sqrt()).powi(3);
        check("noise chi-square variance", stat > lo && stat < hi);

        let full = path.aggregate_increments(8.0 * tau, 0).unwrap();
        let mut sum = path.aggregate_increments(4.0 * tau, 0).unwrap();
        sum.add_assign(&path.aggregate_increments(4.0 * tau, 1).unwrap()).unwrap();
        let add_err = full
            .data()
            .iter()
            .zip(sum.data().iter())
            .fold(0.0f64, |acc, (x, y)| acc.max((x - y).norm()));
        check("coupling additivity", add_err < 1e-13);
    }

    // Chebyshev link between tail norms and violation measure
    {
        let basis = SpectralBasis::neumann(12).unwrap();
        let m = basis.grid_points();
        for _ in 0..20 {
            let values = ndarray::Array2::from_shape_fn((m, m), |_| rng.gen_range(-1.6..1.6));
            let u = Field::from_values(Arc::clone(&basis), values).unwrap();
            let (up, lo) = diagnostics::tail_norms(&u);
            for &d0 in &[0.1, 0.3] {
                let v = diagnostics::violation_measure(&u, d0);
                check("Chebyshev link", v <= (up * up + lo * lo) / (d0 * d0) + 1e-12);
            }
        }
    }

    report(
        "7 property battery",
        failures.is_empty(),
        &format!(
            "potential identities, f^j smoothness, Parseval/round-trip/eigen, noise chi-square/coupling, Chebyshev link{}",
            if failures.is_empty() {
                " all at stated tolerances".to_string()
            } else {
                format!("; failing: {failures:?}")
            }
        ),
    );
}
