//! Experiment configuration: one JSON file drives every subcommand.
//!
//! Defaults follow the common experimental setup: Neumann basis, N = 32,
//! c = 3/2, alpha = 2, sigma = 1, Nemytskii noise with b = sin^2(pi u),
//! epsilon = 1. Ladders, horizons and step sizes are per-experiment.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{Diffusion, NoiseCase, NoiseSpec};
use crate::potential::PotentialParams;
use crate::solver::{Scheme, SolverConfig};
use crate::spectral::{BoundaryCondition, SpectralBasis};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Monte Carlo ensemble with per-step diagnostics and snapshots.
    Simulate,
    /// Strong-error ladder against a fine reference, with an order fit.
    Converge,
    /// Averaged energy curves over a delta ladder with common noise.
    EnergyScan,
    /// Epsilon ladder against the deterministic ETDRK2 run.
    Coarsen,
    /// Additive-noise blow-up demonstration with a degenerate companion.
    BlowupDemo,
    /// Monte Carlo residual of the averaged energy evolution law.
    EnergyLaw,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Converge => "converge",
            ExperimentKind::EnergyScan => "energy-scan",
            ExperimentKind::Coarsen => "coarsen",
            ExperimentKind::BlowupDemo => "blowup-demo",
            ExperimentKind::EnergyLaw => "energy-law",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseCaseKind {
    Additive,
    Nemytskii,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiffusionKind {
    #[serde(rename = "one")]
    One,
    #[serde(rename = "sin2pi")]
    Sin2Pi,
}

fn d_bc() -> BoundaryCondition {
    BoundaryCondition::Neumann
}
fn d_n_modes() -> usize {
    32
}
fn d_sigma() -> f64 {
    1.0
}
fn d_tau() -> f64 {
    1e-3
}
fn d_t_final() -> f64 {
    1.0
}
fn d_alpha() -> f64 {
    2.0
}
fn d_delta() -> f64 {
    1e-4
}
fn d_c() -> f64 {
    1.5
}
fn d_case() -> NoiseCaseKind {
    NoiseCaseKind::Nemytskii
}
fn d_diffusion() -> DiffusionKind {
    DiffusionKind::Sin2Pi
}
fn d_epsilon() -> f64 {
    1.0
}
fn d_seed() -> u64 {
    2024
}
fn d_realizations() -> usize {
    100
}
fn d_ic() -> String {
    "fig1".to_string()
}
fn d_blowup() -> f64 {
    1e3
}
fn d_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn d_scheme() -> Scheme {
    Scheme::StabilizedSemiImplicit
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "d_bc")]
    pub bc: BoundaryCondition,
    #[serde(default = "d_n_modes")]
    pub n_modes: usize,
    #[serde(default)]
    pub dealias: bool,
    #[serde(default = "d_sigma")]
    pub sigma: f64,
    #[serde(default = "d_tau")]
    pub tau: f64,
    #[serde(default = "d_t_final")]
    pub t_final: f64,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_c")]
    pub c: f64,
    #[serde(default = "d_case")]
    pub noise_case: NoiseCaseKind,
    #[serde(default = "d_diffusion")]
    pub diffusion: DiffusionKind,
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_realizations")]
    pub realizations: usize,
    #[serde(default = "d_ic")]
    pub initial_condition: String,
    #[serde(default = "d_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// converge: coarse step sizes, sorted descending
    #[serde(default)]
    pub tau_ladder: Vec<f64>,
    /// converge: reference step size
    #[serde(default)]
    pub tau_ref: Option<f64>,
    /// converge: measure the error as the sup over coarse step boundaries
    /// instead of at the final time
    #[serde(default)]
    pub error_sup_over_time: bool,
    /// energy-scan: regularization scales, sorted descending
    #[serde(default)]
    pub delta_ladder: Vec<f64>,
    /// coarsen: noise intensities, sorted descending
    #[serde(default)]
    pub epsilon_ladder: Vec<f64>,
    /// bound-violation threshold; defaults to delta
    #[serde(default)]
    pub delta0: Option<f64>,
    #[serde(default = "d_blowup")]
    pub blowup_threshold: f64,
    #[serde(default = "d_output_dir")]
    pub output_dir: PathBuf,
}

fn sorted_desc(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] >= w[1])
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("cannot parse config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations < 1 {
            return Err(Error::Config("realizations must be >= 1".to_string()));
        }
        if !self.tau_ladder.is_empty() && !sorted_desc(&self.tau_ladder) {
            return Err(Error::Config("tau_ladder must be sorted descending".to_string()));
        }
        if !self.delta_ladder.is_empty() && !sorted_desc(&self.delta_ladder) {
            return Err(Error::Config("delta_ladder must be sorted descending".to_string()));
        }
        if !self.epsilon_ladder.is_empty() && !sorted_desc(&self.epsilon_ladder) {
            return Err(Error::Config("epsilon_ladder must be sorted descending".to_string()));
        }
        if let Some(tref) = self.tau_ref {
            for &t in &self.tau_ladder {
                let r = t / tref;
                if (r - r.round()).abs() > 1e-9 * r {
                    return Err(Error::Config(format!(
                        "tau_ladder entry {t} is not an integer multiple of tau_ref {tref}"
                    )));
                }
            }
        }
        // noise and potential before solver_config, which assumes them valid
        self.noise_spec()?;
        PotentialParams::new(self.delta, self.c)?;
        // structural solver checks run once the basis exists
        self.basis().and_then(|b| self.solver_config().validate(&b))?;
        Ok(())
    }

    pub fn basis(&self) -> Result<Arc<SpectralBasis>> {
        SpectralBasis::new(self.bc, self.n_modes, self.dealias)
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        let case = match self.noise_case {
            NoiseCaseKind::Additive => NoiseCase::Additive,
            NoiseCaseKind::Nemytskii => NoiseCase::Nemytskii(match self.diffusion {
                DiffusionKind::One => Diffusion::One,
                DiffusionKind::Sin2Pi => Diffusion::SinSqPi,
            }),
        };
        NoiseSpec::new(case, self.epsilon)
    }

    pub fn potential(&self) -> PotentialParams {
        PotentialParams { delta: self.delta, c: self.c }
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            sigma: self.sigma,
            tau: self.tau,
            t_final: self.t_final,
            alpha: self.alpha,
            potential: self.potential(),
            noise: self.noise_spec().expect("validated noise spec"),
            n_modes: self.n_modes,
            dealias: self.dealias,
            scheme: self.scheme,
            seed: self.seed,
            blowup_threshold: self.blowup_threshold,
            delta0: self.delta0,
        }
    }
}
