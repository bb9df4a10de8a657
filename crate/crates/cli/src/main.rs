// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod rundir;
mod verbs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Dwell-time stability certificates and gain-scheduled synthesis for LPV
/// time-delay systems.
///
/// Exit status: 0 certified / feasible, 1 not certified / infeasible (or a
/// diverged simulation, or a failed audit), 2 configuration error, 3 solver
/// failure.
#[derive(Parser, Debug)]
#[command(name = "lpvdt", version)]
pub struct Cli {
    /// Directory that receives run directories.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,

    /// Exact run directory (overrides `--out`).
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub verb: Verb,
}

#[derive(Subcommand, Debug)]
pub enum Verb {
    /// Dwell-time stability analysis of the configured plant.
    Analyze {
        config: PathBuf,
        #[command(flatten)]
        grid: GridFlags,
        /// Skip the refined-grid audit.
        #[arg(long)]
        no_refine: bool,
    },
    /// Gain-scheduled state-feedback synthesis.
    Synthesize {
        config: PathBuf,
        #[command(flatten)]
        grid: GridFlags,
        #[arg(long, value_enum)]
        structure: Option<StructureFlag>,
        /// Fixed L2 bound instead of minimizing it.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        no_refine: bool,
    },
    /// Simulate the configured plant or network; writes trajectory CSV.
    Simulate {
        config: PathBuf,
        /// Gain schedule (gains.json of a synthesize run) for closed-loop runs.
        #[arg(long)]
        gain: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Bisection or cell sweep as configured.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        grid: GridFlags,
    },
    /// Trace the Lyapunov functional of a certificate along random runs.
    Certify {
        config: PathBuf,
        /// report.json of an earlier analyze or synthesize run; otherwise
        /// the certificate is computed first.
        #[arg(long)]
        from: Option<PathBuf>,
        #[command(flatten)]
        grid: GridFlags,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trajectories: Option<usize>,
    },
}

#[derive(Args, Debug, Clone, Default)]
pub struct GridFlags {
    /// Clock grid points.
    #[arg(long)]
    pub n_tau: Option<usize>,
    /// Parameter grid points per axis.
    #[arg(long)]
    pub n_rho: Option<usize>,
    /// Clock degree of every certificate matrix.
    #[arg(long)]
    pub deg_tau: Option<u32>,
    /// Parameter degree of every certificate matrix.
    #[arg(long)]
    pub deg_rho: Option<u32>,
    /// Solver feasibility tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum StructureFlag {
    Free,
    TauRhoSplit,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    ExitCode::from(verbs::run(&cli))
}
