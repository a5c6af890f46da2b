//! Experiment CLI: each subcommand reads one JSON config and writes CSV
//! tables, snapshots and a run manifest into the configured output directory.
//!
//! Exit codes: 0 success (a signaled blow-up is a result, not a failure),
//! 2 configuration errors, 3 numerical failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use logsac::harness::{run_experiment, ExperimentConfig, ExperimentKind};
use logsac::Error;

#[derive(Parser)]
#[command(name = "logsac", version, about = "Stochastic Allen-Cahn experiments with a regularized logarithmic potential")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte Carlo ensemble with per-step diagnostics and snapshots
    Simulate(RunArgs),
    /// Strong-error ladder and temporal order fit
    Converge(RunArgs),
    /// Averaged energy curves over a delta ladder (common noise)
    EnergyScan(RunArgs),
    /// Epsilon ladder against the deterministic ETDRK2 run
    Coarsen(RunArgs),
    /// Additive-noise blow-up demonstration with degenerate companion
    BlowupDemo(RunArgs),
    /// Monte Carlo residual of the averaged energy evolution law
    EnergyLaw(RunArgs),
}

impl Cmd {
    fn kind(&self) -> ExperimentKind {
        match self {
            Cmd::Simulate(_) => ExperimentKind::Simulate,
            Cmd::Converge(_) => ExperimentKind::Converge,
            Cmd::EnergyScan(_) => ExperimentKind::EnergyScan,
            Cmd::Coarsen(_) => ExperimentKind::Coarsen,
            Cmd::BlowupDemo(_) => ExperimentKind::BlowupDemo,
            Cmd::EnergyLaw(_) => ExperimentKind::EnergyLaw,
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Cmd::Simulate(a)
            | Cmd::Converge(a)
            | Cmd::EnergyScan(a)
            | Cmd::Coarsen(a)
            | Cmd::BlowupDemo(a)
            | Cmd::EnergyLaw(a) => a,
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Domain(_) | Error::Shape(_) | Error::Json(_) => 2,
        Error::Numerical(_) | Error::NonFinite(_) | Error::Io(_) => 3,
    }
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    let args = cli.cmd.args();
    let mut cfg = ExperimentConfig::load(&args.config)?;
    // the subcommand is authoritative for the experiment kind
    cfg.experiment = cli.cmd.kind();
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    for line in run_experiment(&cfg)? {
        println!("{line}");
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
