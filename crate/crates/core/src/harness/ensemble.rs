//! Monte Carlo ensemble execution, coupled strong-error estimation and the
//! log-log order fit.
//!
//! Realization m derives its seed from the base seed by a fixed splitmix
//! mixing, so ensembles are reproducible, order-independent under the worker
//! pool (results are collected by realization index) and unchanged when other
//! realizations are added or removed.
//!
//! Strong errors couple every refinement level to one common Brownian path:
//! the fine path is sampled at the reference step and the coarse run consumes
//! exact partial sums of the fine increments.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::{derive_seed, CoarseView, NoisePath};
use crate::solver::{run_trajectory_with, RunOptions, SolverConfig, TrajectoryRecord};
use crate::spectral::Field;

/// Run `m` independent trajectories; realization `i` is seeded from
/// `(cfg.seed, i)`.
pub fn run_ensemble(
    cfg: &SolverConfig,
    u0: &Field,
    m: usize,
    opts: &RunOptions,
) -> Result<Vec<TrajectoryRecord>> {
    if m < 1 {
        return Err(Error::Config("ensemble needs at least one realization".to_string()));
    }
    let basis = u0.basis();
    (0..m)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = derive_seed(cfg.seed, i as u64);
            let path =
                NoisePath::new(std::sync::Arc::clone(basis), c.seed, c.tau, c.n_steps()?)?;
            run_trajectory_with(u0, &c, Some(&path), opts)
        })
        .collect()
}

/// Root-mean-square final-time L² gap between two step sizes on common paths,
/// with a jackknife standard error.
pub fn strong_error(
    cfg: &SolverConfig,
    u0: &Field,
    tau_coarse: f64,
    tau_ref: f64,
    m: usize,
) -> Result<(f64, f64)> {
    let per = strong_error_ladder_with(cfg, u0, &[tau_coarse], tau_ref, m, false)?;
    Ok(per[0].1)
}

/// Final-time strong errors for a whole ladder sharing one reference run per
/// realization. Returns `(tau, (error, stderr))` per ladder entry.
pub fn strong_error_ladder(
    cfg: &SolverConfig,
    u0: &Field,
    taus: &[f64],
    tau_ref: f64,
    m: usize,
) -> Result<Vec<(f64, (f64, f64))>> {
    strong_error_ladder_with(cfg, u0, taus, tau_ref, m, false)
}

/// Ladder strong errors; with `sup_over_time` the per-realization squared
/// gap is the max over the coarse step boundaries instead of the final time.
pub fn strong_error_ladder_with(
    cfg: &SolverConfig,
    u0: &Field,
    taus: &[f64],
    tau_ref: f64,
    m: usize,
    sup_over_time: bool,
) -> Result<Vec<(f64, (f64, f64))>> {
    if taus.is_empty() {
        return Err(Error::Config("strong error needs at least one step size".to_string()));
    }
    for &t in taus {
        let r = t / tau_ref;
        if r < 1.0 - 1e-12 || (r - r.round()).abs() > 1e-9 * r {
            return Err(Error::Config(format!(
                "tau {t} is not an integer multiple of tau_ref {tau_ref}"
            )));
        }
    }
    let basis = u0.basis();

    // per realization: reference trajectory once, then every coarse run
    // against the same fine path
    let per_real: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let seed = derive_seed(cfg.seed, i as u64);
            let mut cref = cfg.clone();
            cref.seed = seed;
            cref.tau = tau_ref;
            let n_fine = cref.n_steps()?;
            let boundary_times = |tau: f64| -> Vec<f64> {
                let j = (cfg.t_final / tau).round() as usize;
                (0..=j).map(|k| k as f64 * tau).collect()
            };
            // the reference keeps snapshots at the coarsest boundaries, which
            // contain every other ladder entry's boundaries by integrality
            let ref_opts = RunOptions {
                snapshot_times: if sup_over_time { boundary_times(taus[0]) } else { vec![] },
                record_energy_law: false,
            };
            let path = NoisePath::new(std::sync::Arc::clone(basis), seed, tau_ref, n_fine)?;
            let rec_ref = run_trajectory_with(u0, &cref, Some(&path), &ref_opts)?;
            let w = basis.cell_area();
            let dist2 = |a: &Field, b: &Field| -> f64 {
                a.values()
                    .iter()
                    .zip(b.values().iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    * w
            };
            taus.iter()
                .map(|&tc| {
                    let mut cc = cfg.clone();
                    cc.seed = seed;
                    cc.tau = tc;
                    let view = CoarseView::new(&path, tc)?;
                    let opts = RunOptions {
                        snapshot_times: if sup_over_time {
                            boundary_times(taus[0])
                        } else {
                            vec![]
                        },
                        record_energy_law: false,
                    };
                    let rec_c = run_trajectory_with(u0, &cc, Some(&view), &opts)?;
                    if sup_over_time {
                        let mut worst = 0.0f64;
                        for (sc, sr) in rec_c.snapshots.iter().zip(rec_ref.snapshots.iter()) {
                            worst = worst.max(dist2(&sc.field, &sr.field));
                        }
                        Ok(worst)
                    } else {
                        Ok(dist2(&rec_c.final_field, &rec_ref.final_field))
                    }
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(taus
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let d2: Vec<f64> = per_real.iter().map(|v| v[k]).collect();
            (t, rms_with_jackknife(&d2))
        })
        .collect())
}

/// Energy-law residual straight from trajectory records; errors when the
/// per-step integrands were not recorded.
pub fn energy_law_residual_from_records(
    records: &[TrajectoryRecord],
    epsilon: f64,
    tau: f64,
) -> Result<Vec<crate::diagnostics::ResidualRow>> {
    let mut samples = Vec::with_capacity(records.len());
    for r in records {
        samples.push(
            r.energy_law
                .as_deref()
                .ok_or_else(|| {
                    Error::Config(
                        "energy-law residual needs runs recorded with record_energy_law"
                            .to_string(),
                    )
                })?,
        );
    }
    let times = records
        .first()
        .ok_or_else(|| Error::Config("energy-law residual needs at least one record".to_string()))?
        .times
        .clone();
    crate::diagnostics::energy_law_residual(&samples, &times, epsilon, tau)
}

/// sqrt(mean of d2) and its jackknife standard error.
fn rms_with_jackknife(d2: &[f64]) -> (f64, f64) {
    let n = d2.len();
    let total: f64 = d2.iter().sum();
    let err = (total / n as f64).sqrt();
    if n < 2 {
        return (err, 0.0);
    }
    let thetas: Vec<f64> =
        d2.iter().map(|&d| (((total - d) / (n as f64 - 1.0)).max(0.0)).sqrt()).collect();
    let mean_theta = thetas.iter().sum::<f64>() / n as f64;
    let var =
        thetas.iter().map(|t| (t - mean_theta) * (t - mean_theta)).sum::<f64>() * (n as f64 - 1.0)
            / n as f64;
    (err, var.sqrt())
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct OrderPoint {
    pub tau: f64,
    pub error: f64,
    pub stderr: f64,
}

/// Least-squares fit of `ln error` against `ln tau`.
#[derive(Clone, Debug, serde::Serialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<OrderPoint>,
}

/// Fit the convergence order from `(tau, error)` pairs (at least three, all
/// positive).
pub fn estimate_order(points: &[OrderPoint]) -> Result<OrderFit> {
    if points.len() < 3 {
        return Err(Error::Config(format!(
            "order fit needs >= 3 points, got {}",
            points.len()
        )));
    }
    for p in points {
        if !(p.error > 0.0) || !(p.tau > 0.0) {
            return Err(Error::Config(format!(
                "order fit needs positive (tau, error), got ({}, {})",
                p.tau, p.error
            )));
        }
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.tau.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.error.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(OrderFit { slope, intercept, r_squared, points: points.to_vec() })
}
