//! The experiment drivers: each one runs its ensemble(s), writes CSV tables,
//! snapshots and a run manifest into the configured output directory, and
//! returns a structured summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{self, ResidualRow};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, NoiseCaseKind};
use crate::harness::ensemble::{estimate_order, run_ensemble, strong_error_ladder_with, OrderFit, OrderPoint};
use crate::harness::initial::initial_condition;
use crate::noise::{derive_seed, CoarseView, NoiseCase, NoisePath, NoiseSpec};
use crate::solver::{run_trajectory_with, RunOptions, Scheme, TrajectoryRecord};
use crate::spectral::write_snapshot;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_manifest(cfg: &ExperimentConfig, extra: serde_json::Value) -> Result<PathBuf> {
    let path = cfg.output_dir.join("manifest.json");
    let manifest = serde_json::json!({
        "tool": "logsac",
        "version": VERSION,
        "experiment": cfg.experiment.name(),
        "config": cfg,
        "extra": extra,
    });
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

fn csv_writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_diagnostics_csv(path: &Path, rec: &TrajectoryRecord) -> Result<()> {
    let mut w = csv_writer(path)?;
    writeln!(w, "time,energy,sup_norm,tail_upper,tail_lower,violation_measure,blown_up")?;
    for r in &rec.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.time, r.energy, r.sup_norm, r.tail_upper, r.tail_lower, r.violation_measure,
            r.blown_up
        )?;
    }
    Ok(())
}

/// NaN-padded per-realization energy series plus the common time axis.
fn energy_matrix(records: &[TrajectoryRecord], tau: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let len = records.iter().map(|r| r.rows.len()).max().unwrap_or(0);
    let times: Vec<f64> = (0..len).map(|j| j as f64 * tau).collect();
    let series = records
        .iter()
        .map(|r| {
            let mut v: Vec<f64> = r.rows.iter().map(|row| row.energy).collect();
            v.resize(len, f64::NAN);
            v
        })
        .collect();
    (times, series)
}

fn column_means(series: &[Vec<f64>]) -> Vec<f64> {
    if series.is_empty() {
        return Vec::new();
    }
    let len = series[0].len();
    (0..len)
        .map(|j| {
            let vals: Vec<f64> =
                series.iter().map(|s| s[j]).filter(|v| v.is_finite()).collect();
            if vals.len() == series.len() {
                vals.iter().sum::<f64>() / vals.len() as f64
            } else {
                f64::NAN
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct SimulateSummary {
    pub realizations: usize,
    pub blowups: usize,
    pub mean_final_energy: f64,
    pub output_dir: PathBuf,
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<SimulateSummary> {
    ensure_dir(&cfg.output_dir)?;
    let basis = cfg.basis()?;
    let sc = cfg.solver_config();
    let u0 = initial_condition(&cfg.initial_condition, &basis)?;
    let opts = RunOptions { snapshot_times: cfg.snapshot_times.clone(), record_energy_law: false };
    let records = run_ensemble(&sc, &u0, cfg.realizations, &opts)?;

    for (m, rec) in records.iter().enumerate() {
        write_diagnostics_csv(&cfg.output_dir.join(format!("diagnostics_{m:04}.csv")), rec)?;
        for (k, snap) in rec.snapshots.iter().enumerate() {
            let base = cfg.output_dir.join(format!("snapshot_r{m:04}_s{k}"));
            write_snapshot(&snap.field, snap.time, derive_seed(sc.seed, m as u64), &base)?;
        }
    }

    let blowups = records.iter().filter(|r| r.blown_up).count();
    let finals: Vec<f64> = records
        .iter()
        .filter(|r| !r.blown_up)
        .map(|r| r.rows.last().unwrap().energy)
        .collect();
    let mean_final_energy = if finals.is_empty() {
        f64::NAN
    } else {
        finals.iter().sum::<f64>() / finals.len() as f64
    };
    write_manifest(cfg, serde_json::json!({ "blowups": blowups }))?;
    Ok(SimulateSummary {
        realizations: cfg.realizations,
        blowups,
        mean_final_energy,
        output_dir: cfg.output_dir.clone(),
    })
}

// ---------------------------------------------------------------------------
// converge
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct ConvergeSummary {
    pub fit: OrderFit,
    pub errors_strictly_decreasing: bool,
    pub output_dir: PathBuf,
}

pub fn converge(cfg: &ExperimentConfig) -> Result<ConvergeSummary> {
    ensure_dir(&cfg.output_dir)?;
    let tau_ref = cfg
        .tau_ref
        .ok_or_else(|| Error::Config("converge needs tau_ref".to_string()))?;
    if cfg.tau_ladder.len() < 3 {
        return Err(Error::Config("converge needs a tau_ladder with >= 3 entries".to_string()));
    }
    let basis = cfg.basis()?;
    let sc = cfg.solver_config();
    let u0 = initial_condition(&cfg.initial_condition, &basis)?;

    let raw = strong_error_ladder_with(
        &sc,
        &u0,
        &cfg.tau_ladder,
        tau_ref,
        cfg.realizations,
        cfg.error_sup_over_time,
    )?;
    let points: Vec<OrderPoint> = raw
        .iter()
        .map(|&(tau, (error, stderr))| OrderPoint { tau, error, stderr })
        .collect();
    let fit = estimate_order(&points)?;

    let mut w = csv_writer(&cfg.output_dir.join("errors.csv"))?;
    writeln!(w, "tau,error,stderr")?;
    for p in &points {
        writeln!(w, "{},{},{}", p.tau, p.error, p.stderr)?;
    }
    std::fs::write(
        cfg.output_dir.join("order_fit.json"),
        serde_json::to_string_pretty(&fit)?,
    )?;
    let errors_strictly_decreasing =
        points.windows(2).all(|p| p[1].error < p[0].error);
    write_manifest(
        cfg,
        serde_json::json!({
            "tau_ladder": cfg.tau_ladder,
            "tau_ref": tau_ref,
            "slope": fit.slope,
        }),
    )?;
    Ok(ConvergeSummary { fit, errors_strictly_decreasing, output_dir: cfg.output_dir.clone() })
}

// ---------------------------------------------------------------------------
// energy-scan
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct GapStat {
    pub delta_coarse: f64,
    pub delta_fine: f64,
    pub gap: f64,
    /// standard error of the paired (common-noise) difference at the argmax
    pub stderr_at_argmax: f64,
    /// standard error the gap would carry under independent ensembles
    /// (quadrature sum of the two column standard errors)
    pub stderr_indep_at_argmax: f64,
    pub argmax_time: f64,
}

#[derive(Debug, Serialize)]
pub struct EnergyScanSummary {
    pub deltas: Vec<f64>,
    pub gaps: Vec<GapStat>,
    pub output_dir: PathBuf,
}

pub fn energy_scan(cfg: &ExperimentConfig) -> Result<EnergyScanSummary> {
    ensure_dir(&cfg.output_dir)?;
    if cfg.delta_ladder.is_empty() {
        return Err(Error::Config("energy-scan needs a delta_ladder".to_string()));
    }
    let basis = cfg.basis()?;
    let u0 = initial_condition(&cfg.initial_condition, &basis)?;
    let opts = RunOptions::default();

    // common noise: the same base seed (hence the same per-realization paths)
    // drives every delta
    let mut all_series: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    for &delta in &cfg.delta_ladder {
        let mut sc = cfg.solver_config();
        sc.potential.delta = delta;
        let records = run_ensemble(&sc, &u0, cfg.realizations, &opts)?;
        let (t, series) = energy_matrix(&records, sc.tau);
        if t.len() > times.len() {
            times = t;
        }
        all_series.push(series);
    }

    let means: Vec<Vec<f64>> = all_series.iter().map(|s| column_means(s)).collect();

    let mut w = csv_writer(&cfg.output_dir.join("energy_scan.csv"))?;
    let header: Vec<String> =
        cfg.delta_ladder.iter().map(|d| format!("energy_delta_{d:e}")).collect();
    writeln!(w, "time,{}", header.join(","))?;
    for (j, &t) in times.iter().enumerate() {
        let row: Vec<String> = means
            .iter()
            .map(|m| m.get(j).copied().unwrap_or(f64::NAN).to_string())
            .collect();
        writeln!(w, "{},{}", t, row.join(","))?;
    }

    // successive gaps with the paired-difference standard error at the argmax
    let m_real = cfg.realizations;
    let mut gaps = Vec::new();
    for k in 0..cfg.delta_ladder.len().saturating_sub(1) {
        let (a, b) = (&means[k], &means[k + 1]);
        let mut gap = 0.0;
        let mut argmax = 0usize;
        for j in 0..a.len().min(b.len()) {
            let d = (a[j] - b[j]).abs();
            if d.is_finite() && d > gap {
                gap = d;
                argmax = j;
            }
        }
        let se_of = |vals: &[f64]| {
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (vals.len() as f64 - 1.0)
                    / vals.len() as f64)
                    .sqrt()
            } else {
                0.0
            }
        };
        let diffs: Vec<f64> = (0..m_real)
            .map(|m| all_series[k][m][argmax] - all_series[k + 1][m][argmax])
            .collect();
        let col_a: Vec<f64> = (0..m_real).map(|m| all_series[k][m][argmax]).collect();
        let col_b: Vec<f64> = (0..m_real).map(|m| all_series[k + 1][m][argmax]).collect();
        let se_a = se_of(&col_a);
        let se_b = se_of(&col_b);
        gaps.push(GapStat {
            delta_coarse: cfg.delta_ladder[k],
            delta_fine: cfg.delta_ladder[k + 1],
            gap,
            stderr_at_argmax: se_of(&diffs),
            stderr_indep_at_argmax: (se_a * se_a + se_b * se_b).sqrt(),
            argmax_time: times.get(argmax).copied().unwrap_or(f64::NAN),
        });
    }

    write_manifest(cfg, serde_json::json!({ "delta_ladder": cfg.delta_ladder, "gaps": gaps }))?;
    Ok(EnergyScanSummary { deltas: cfg.delta_ladder.clone(), gaps, output_dir: cfg.output_dir.clone() })
}

// ---------------------------------------------------------------------------
// coarsen
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct CoarsenEntry {
    pub epsilon: f64,
    pub max_energy_gap_vs_det: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Serialize)]
pub struct CoarsenSummary {
    pub entries: Vec<CoarsenEntry>,
    pub output_dir: PathBuf,
}

/// Default snapshot times for the coarsening runs, truncated to the horizon.
fn coarsen_snapshot_times(cfg: &ExperimentConfig) -> Vec<f64> {
    let base: Vec<f64> = if cfg.snapshot_times.is_empty() {
        vec![5.0, 20.0, 40.0, 60.0, 100.0, 200.0, 500.0]
    } else {
        cfg.snapshot_times.clone()
    };
    base.into_iter().filter(|&t| t <= cfg.t_final + 1e-12).collect()
}

pub fn coarsen(cfg: &ExperimentConfig) -> Result<CoarsenSummary> {
    ensure_dir(&cfg.output_dir)?;
    if cfg.epsilon_ladder.is_empty() {
        return Err(Error::Config("coarsen needs an epsilon_ladder".to_string()));
    }
    let basis = cfg.basis()?;
    let u0 = initial_condition(&cfg.initial_condition, &basis)?;
    let snap_times = coarsen_snapshot_times(cfg);
    let opts = RunOptions { snapshot_times: snap_times.clone(), record_energy_law: false };

    // deterministic comparator
    let mut det_cfg = cfg.solver_config();
    det_cfg.scheme = Scheme::DeterministicEtdrk2;
    det_cfg.noise = NoiseSpec::new(NoiseCase::Additive, 0.0)?;
    let det = run_trajectory_with::<NoisePath>(&u0, &det_cfg, None, &opts)?;
    let det_energy: Vec<f64> = det.rows.iter().map(|r| r.energy).collect();
    for (k, snap) in det.snapshots.iter().enumerate() {
        write_snapshot(
            &snap.field,
            snap.time,
            det_cfg.seed,
            &cfg.output_dir.join(format!("snapshot_det_s{k}")),
        )?;
    }

    let mut entries = Vec::new();
    let mut curves: Vec<Vec<f64>> = Vec::new();
    for &eps in &cfg.epsilon_ladder {
        let mut sc = cfg.solver_config();
        sc.noise = NoiseSpec::new(sc.noise.case.clone(), eps)?;
        let records = run_ensemble(&sc, &u0, cfg.realizations, &opts)?;
        let (_, series) = energy_matrix(&records, sc.tau);
        let mean = column_means(&series);
        for (k, snap) in records[0].snapshots.iter().enumerate() {
            write_snapshot(
                &snap.field,
                snap.time,
                derive_seed(sc.seed, 0),
                &cfg.output_dir.join(format!("snapshot_eps{eps:e}_s{k}")),
            )?;
        }
        let max_det = det_energy.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        let tolerance = 10.0 * cfg.tau * (1.0 + max_det);
        let mut gap = 0.0f64;
        for j in 0..mean.len().min(det_energy.len()) {
            let d = (mean[j] - det_energy[j]).abs();
            if d.is_finite() {
                gap = gap.max(d);
            } else {
                gap = f64::INFINITY;
            }
        }
        entries.push(CoarsenEntry {
            epsilon: eps,
            max_energy_gap_vs_det: gap,
            tolerance,
            within_tolerance: gap <= tolerance,
        });
        curves.push(mean);
    }

    let mut w = csv_writer(&cfg.output_dir.join("coarsen_energy.csv"))?;
    let header: Vec<String> =
        cfg.epsilon_ladder.iter().map(|e| format!("energy_eps_{e:e}")).collect();
    writeln!(w, "time,{},energy_det", header.join(","))?;
    for j in 0..det_energy.len() {
        let row: Vec<String> = curves
            .iter()
            .map(|c| c.get(j).copied().unwrap_or(f64::NAN).to_string())
            .collect();
        writeln!(w, "{},{},{}", j as f64 * cfg.tau, row.join(","), det_energy[j])?;
    }

    write_manifest(cfg, serde_json::json!({ "entries": entries, "snapshot_times": snap_times }))?;
    Ok(CoarsenSummary { entries, output_dir: cfg.output_dir.clone() })
}

// ---------------------------------------------------------------------------
// blowup-demo
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct BlowupRealization {
    pub case: String,
    pub realization: usize,
    pub blown_up: bool,
    pub blowup_time: Option<f64>,
    pub max_sup: f64,
}

#[derive(Debug, Serialize)]
pub struct BlowupSummary {
    pub case1_blowups: usize,
    pub case2_blowups: usize,
    pub first_blowup_time: Option<f64>,
    pub case2_max_sup: f64,
    pub realizations: usize,
    pub output_dir: PathBuf,
}

pub fn blowup_demo(cfg: &ExperimentConfig) -> Result<BlowupSummary> {
    ensure_dir(&cfg.output_dir)?;
    let basis = cfg.basis()?;
    let u0 = initial_condition(&cfg.initial_condition, &basis)?;
    let opts = RunOptions::default();

    let run_case = |case: NoiseCaseKind, label: &str| -> Result<Vec<BlowupRealization>> {
        let mut c = cfg.clone();
        c.noise_case = case;
        let sc = c.solver_config();
        let records = run_ensemble(&sc, &u0, cfg.realizations, &opts)?;
        Ok(records
            .iter()
            .enumerate()
            .map(|(m, r)| BlowupRealization {
                case: label.to_string(),
                realization: m,
                blown_up: r.blown_up,
                blowup_time: r.blowup_time,
                max_sup: r.max_sup_norm(),
            })
            .collect())
    };

    let case1 = run_case(NoiseCaseKind::Additive, "additive")?;
    let case2 = run_case(NoiseCaseKind::Nemytskii, "nemytskii")?;

    let mut w = csv_writer(&cfg.output_dir.join("blowup.csv"))?;
    writeln!(w, "case,realization,blown_up,blowup_time,max_sup")?;
    for r in case1.iter().chain(case2.iter()) {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.case,
            r.realization,
            r.blown_up,
            r.blowup_time.map(|t| t.to_string()).unwrap_or_default(),
            r.max_sup
        )?;
    }

    let case1_blowups = case1.iter().filter(|r| r.blown_up).count();
    let case2_blowups = case2.iter().filter(|r| r.blown_up).count();
    let first_blowup_time = case1
        .iter()
        .filter_map(|r| r.blowup_time)
        .min_by(|a, b| a.partial_cmp(b).unwrap());
    let case2_max_sup = case2.iter().fold(0.0f64, |m, r| m.max(r.max_sup));
    write_manifest(
        cfg,
        serde_json::json!({
            "case1_blowups": case1_blowups,
            "case2_blowups": case2_blowups,
            "first_blowup_time": first_blowup_time,
        }),
    )?;
    Ok(BlowupSummary {
        case1_blowups,
        case2_blowups,
        first_blowup_time,
        case2_max_sup,
        realizations: cfg.realizations,
        output_dir: cfg.output_dir.clone(),
    })
}

// ---------------------------------------------------------------------------
// energy-law
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct EnergyLawSummary {
    pub c_fit: f64,
    pub max_violation_ratio: f64,
    pub all_within_bound: bool,
    pub output_dir: PathBuf,
}

pub struct EnergyLawResult {
    pub rows_tau: Vec<ResidualRow>,
    pub rows_half: Vec<ResidualRow>,
    pub summary: EnergyLawSummary,
}

/// Residual of the averaged energy evolution law at `tau` and `tau/2` on
/// coupled paths, with the Richardson constant fitted from the pair.
pub fn energy_law(cfg: &ExperimentConfig) -> Result<EnergyLawResult> {
    ensure_dir(&cfg.output_dir)?;
    let basis = cfg.basis()?;
    let u0 = initial_condition(&cfg.initial_condition, &basis)?;
    let sc = cfg.solver_config();
    let tau = sc.tau;
    let opts = RunOptions { snapshot_times: Vec::new(), record_energy_law: true };

    let mut sc_half = sc.clone();
    sc_half.tau = tau / 2.0;

    struct Pair {
        samples_tau: Vec<crate::diagnostics::EnergyLawSample>,
        samples_half: Vec<crate::diagnostics::EnergyLawSample>,
    }

    let pairs: Vec<Pair> = (0..cfg.realizations)
        .into_par_iter()
        .map(|i| -> Result<Pair> {
            let seed = derive_seed(sc.seed, i as u64);
            let mut ct = sc.clone();
            ct.seed = seed;
            let mut ch = sc_half.clone();
            ch.seed = seed;
            let n_fine = ch.n_steps()?;
            let path = NoisePath::new(Arc::clone(&basis), seed, ch.tau, n_fine)?;
            let rec_half = run_trajectory_with(&u0, &ch, Some(&path), &opts)?;
            let view = CoarseView::new(&path, tau)?;
            let rec_tau = run_trajectory_with(&u0, &ct, Some(&view), &opts)?;
            if rec_tau.blown_up || rec_half.blown_up {
                return Err(Error::Numerical(
                    "blow-up during energy-law run; choose a tamer configuration".to_string(),
                ));
            }
            Ok(Pair {
                samples_tau: rec_tau.energy_law.expect("recorded"),
                samples_half: rec_half.energy_law.expect("recorded"),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n_steps = sc.n_steps()?;
    let times_tau: Vec<f64> = (0..=n_steps).map(|j| j as f64 * tau).collect();
    let times_half: Vec<f64> = (0..=2 * n_steps).map(|j| j as f64 * tau / 2.0).collect();
    let refs_tau: Vec<&[_]> = pairs.iter().map(|p| p.samples_tau.as_slice()).collect();
    let refs_half: Vec<&[_]> = pairs.iter().map(|p| p.samples_half.as_slice()).collect();
    let rows_tau =
        diagnostics::energy_law_residual(&refs_tau, &times_tau, sc.noise.epsilon, tau)?;
    let rows_half =
        diagnostics::energy_law_residual(&refs_half, &times_half, sc.noise.epsilon, tau / 2.0)?;

    // Richardson: R(tau) ~ C tau, so C = 2 max_t |R_tau - R_half| / tau,
    // comparing at the shared step times
    let mut max_diff = 0.0f64;
    for (j, row) in rows_tau.iter().enumerate() {
        let d = (row.residual - rows_half[2 * j].residual).abs();
        max_diff = max_diff.max(d);
    }
    let c_fit = 2.0 * max_diff / tau;

    let mut max_ratio = 0.0f64;
    for row in &rows_tau {
        let bound = 3.0 * row.stderr + c_fit * tau;
        if bound > 0.0 {
            max_ratio = max_ratio.max(row.residual.abs() / bound);
        }
    }
    let all_within_bound = max_ratio <= 1.0;

    let mut w = csv_writer(&cfg.output_dir.join("energy_law_residual.csv"))?;
    writeln!(w, "time,residual_tau,stderr_tau,residual_half,stderr_half,bound")?;
    for (j, row) in rows_tau.iter().enumerate() {
        let h = &rows_half[2 * j];
        writeln!(
            w,
            "{},{},{},{},{},{}",
            row.time,
            row.residual,
            row.stderr,
            h.residual,
            h.stderr,
            3.0 * row.stderr + c_fit * tau
        )?;
    }

    let summary = EnergyLawSummary {
        c_fit,
        max_violation_ratio: max_ratio,
        all_within_bound,
        output_dir: cfg.output_dir.clone(),
    };
    write_manifest(
        cfg,
        serde_json::json!({
            "c_fit": c_fit,
            "max_violation_ratio": max_ratio,
            "all_within_bound": all_within_bound,
        }),
    )?;
    Ok(EnergyLawResult { rows_tau, rows_half, summary })
}
