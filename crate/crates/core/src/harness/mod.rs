//! Experiment orchestration: configuration, initial conditions, Monte Carlo
//! ensembles with coupled Brownian paths, strong-error and order estimation,
//! parameter sweeps, and the CLI-facing experiment drivers.

pub mod config;
pub mod ensemble;
pub mod experiments;
pub mod initial;

pub use config::{ExperimentConfig, ExperimentKind};
pub use ensemble::{estimate_order, run_ensemble, strong_error, strong_error_ladder, strong_error_ladder_with, OrderFit, OrderPoint};
pub use initial::initial_condition;

use crate::error::Result;

/// Dispatch an experiment and return printable summary lines.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    match cfg.experiment {
        ExperimentKind::Simulate => {
            let s = experiments::simulate(cfg)?;
            Ok(vec![format!(
                "simulate: {} realizations, {} blow-ups, mean final energy {:.6}, outputs in {}",
                s.realizations,
                s.blowups,
                s.mean_final_energy,
                s.output_dir.display()
            )])
        }
        ExperimentKind::Converge => {
            let s = experiments::converge(cfg)?;
            let mut lines = vec![format!(
                "converge: slope {:.4} (R^2 {:.4}), errors decreasing: {}",
                s.fit.slope, s.fit.r_squared, s.errors_strictly_decreasing
            )];
            for p in &s.fit.points {
                lines.push(format!("  tau {:>10.3e}  error {:.6e}  (se {:.2e})", p.tau, p.error, p.stderr));
            }
            Ok(lines)
        }
        ExperimentKind::EnergyScan => {
            let s = experiments::energy_scan(cfg)?;
            let mut lines = vec![format!("energy-scan over {} deltas:", s.deltas.len())];
            for g in &s.gaps {
                lines.push(format!(
                    "  gap({:.1e} -> {:.1e}) = {:.6e} at t = {:.3} (se {:.2e})",
                    g.delta_coarse, g.delta_fine, g.gap, g.argmax_time, g.stderr_at_argmax
                ));
            }
            Ok(lines)
        }
        ExperimentKind::Coarsen => {
            let s = experiments::coarsen(cfg)?;
            let mut lines = vec!["coarsen vs deterministic ETDRK2:".to_string()];
            for e in &s.entries {
                lines.push(format!(
                    "  eps {:.1e}: max energy gap {:.6e} (tolerance {:.3e}) within: {}",
                    e.epsilon, e.max_energy_gap_vs_det, e.tolerance, e.within_tolerance
                ));
            }
            Ok(lines)
        }
        ExperimentKind::BlowupDemo => {
            let s = experiments::blowup_demo(cfg)?;
            Ok(vec![format!(
                "blowup-demo: additive {} / {} blown up (first at t = {:?}); nemytskii {} blown up, max sup {:.4}",
                s.case1_blowups, s.realizations, s.first_blowup_time, s.case2_blowups, s.case2_max_sup
            )])
        }
        ExperimentKind::EnergyLaw => {
            let r = experiments::energy_law(cfg)?;
            Ok(vec![format!(
                "energy-law: C_fit {:.4e}, max |residual|/bound {:.4}, within: {}",
                r.summary.c_fit, r.summary.max_violation_ratio, r.summary.all_within_bound
            )])
        }
    }
}
