//! `orens` command-line front end.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use orens::dynamics::Envelope;
use orens::fockspace::QuasiKind;
use orens::optimizer::KindFamily;
use orens::pipeline::Engine;
use orens::{ObservableKind, OrensError};
use serde::{Deserialize, Serialize};

pub mod benchmark;
pub mod commands;
pub mod config;
pub mod io;
pub mod manifest;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

const STATE_HELP: &str = "State descriptor or JSON file. Descriptors: fock:k, sup:j:k[:phi] \
((|j>+e^{i phi}|k>)/sqrt2, phi in radians or as pi/2, 0.5pi, ...), coh:re[:im], \
cat:re[:im]:phase (phase one of +1, -1, +i, -i). A JSON file may hold a density matrix or a \
reconstruction result, whose BME estimate is used.";

#[derive(Debug, Parser)]
#[command(
    name = "orens",
    version,
    about = "Optimized excitation-number sampling tomography"
)]
pub struct Cli {
    /// TOML defaults; without it ./orens.toml is used when present.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimize the condition number of a displacement set.
    Optimize(OptimizeArgs),
    /// Simulate measurement outcomes of a state under a plan.
    Simulate(SimulateArgs),
    /// Reconstruct a state from outcome data (LS, MLE and BME).
    Reconstruct(ReconstructArgs),
    /// Run a reconstruction benchmark described by a TOML spec.
    Benchmark(BenchmarkArgs),
    /// Evaluate a quasi-probability distribution on a phase-space grid.
    Grid(GridArgs),
}

/// Observable family to optimize for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    /// Fock projectors with `n` swept over `0..D`.
    Fock,
    FockFixed(usize),
    Husimi,
    Parity,
    /// Parity displacements measured with both final-pulse phases.
    CorrectedParity,
}

impl PlanKind {
    pub fn family(self) -> KindFamily {
        match self {
            PlanKind::Fock => KindFamily::Fock,
            PlanKind::FockFixed(n) => KindFamily::FockFixed(n),
            PlanKind::Husimi => KindFamily::Husimi,
            PlanKind::Parity | PlanKind::CorrectedParity => KindFamily::Parity,
        }
    }

    /// Kind the optimized plan is relabelled to, if any.
    pub fn relabel(self) -> Option<ObservableKind> {
        (self == PlanKind::CorrectedParity).then_some(ObservableKind::CorrectedParity)
    }
}

impl FromStr for PlanKind {
    type Err = OrensError;

    fn from_str(s: &str) -> orens::Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fock" | "orens" => Ok(PlanKind::Fock),
            "husimi" => Ok(PlanKind::Husimi),
            "parity" | "wigner" => Ok(PlanKind::Parity),
            "corrected_parity" | "corrected_wigner" => Ok(PlanKind::CorrectedParity),
            t => t
                .strip_prefix("fock:")
                .and_then(|n| n.parse().ok())
                .map(PlanKind::FockFixed)
                .ok_or_else(|| OrensError::Parse(format!("unknown plan kind '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EngineName {
    Analytic,
    Lindblad,
}

impl EngineName {
    pub fn engine(self, envelope: Envelope) -> Engine {
        match self {
            EngineName::Analytic => Engine::Analytic,
            EngineName::Lindblad => Engine::Lindblad { envelope },
        }
    }
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub dim: usize,
    /// fock (sweeps n), fock:n, husimi, parity or corrected_parity.
    #[arg(long)]
    pub kind: PlanKind,
    /// Displacement bound |alpha| (default 2).
    #[arg(long)]
    pub max_alpha: Option<f64>,
    /// Random restarts per observable (default 32).
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Iteration cap of the final descent stage (default 5000).
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "plan.json")]
    pub out: PathBuf,
    /// Descent trace CSV (default: <out>.trace.csv).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long, help = STATE_HELP)]
    pub state: String,
    /// ideal, device, or a noise JSON file (default ideal).
    #[arg(long)]
    pub noise: Option<String>,
    /// Shots per setting; 0 writes exact probabilities (default 1000).
    #[arg(long)]
    pub shots: Option<u64>,
    #[arg(long, value_enum)]
    pub engine: Option<EngineName>,
    /// Selective-pulse envelope for the lindblad engine: square or gaussian (default gaussian).
    #[arg(long)]
    pub envelope: Option<Envelope>,
    /// Accepted truncation leakage of descriptor states (default 1e-6).
    #[arg(long)]
    pub leakage_tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "outcomes.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, help = STATE_HELP)]
    pub target: Option<String>,
    /// MCMC settings, JSON or TOML.
    #[arg(long)]
    pub bayes_config: Option<PathBuf>,
    /// Noise model whose readout, thermal and dephasing distortions are undone first.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub leakage_tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "reconstruction.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Benchmark spec (TOML).
    pub spec: PathBuf,
    #[arg(long, default_value = "benchmark")]
    pub out_dir: PathBuf,
    /// Worker threads (capped by ORENS_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long, help = STATE_HELP)]
    pub rho: String,
    /// Truncation dimension for descriptor states.
    #[arg(long)]
    pub dim: Option<usize>,
    /// wigner, husimi or qn:n.
    #[arg(long, default_value = "wigner")]
    pub kind: QuasiKind,
    /// Half width of the square grid in Re(alpha) and Im(alpha).
    #[arg(long, default_value_t = 3.0)]
    pub range: f64,
    /// Points per axis.
    #[arg(long, default_value_t = 101)]
    pub points: usize,
    #[arg(long)]
    pub leakage_tol: Option<f64>,
    #[arg(long, default_value = "grid.csv")]
    pub out: PathBuf,
}

/// Maps an error chain onto the exit-code contract: 3 for plan/data
/// mismatches, 4 for numerical failures, 2 for everything else (bad
/// arguments, unreadable or malformed inputs).
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<OrensError>() {
            return match e {
                OrensError::DataMismatch(_) | OrensError::DimensionMismatch { .. } => EXIT_MISMATCH,
                OrensError::SingularSystem { .. }
                | OrensError::OptimizationFailed(_)
                | OrensError::Accuracy { .. }
                | OrensError::NonInvertible(_)
                | OrensError::Consistency(_) => EXIT_NUMERICAL,
                _ => EXIT_USAGE,
            };
        }
    }
    EXIT_USAGE
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Optimize(a) => commands::optimize(&a, &cfg),
        Command::Simulate(a) => commands::simulate(&a, &cfg),
        Command::Reconstruct(a) => commands::reconstruct(&a, &cfg),
        Command::Benchmark(a) => benchmark::run(&a, &cfg),
        Command::Grid(a) => commands::grid(&a, &cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_kind_parsing() {
        assert_eq!("fock".parse::<PlanKind>().unwrap(), PlanKind::Fock);
        assert_eq!(
            "fock:3".parse::<PlanKind>().unwrap(),
            PlanKind::FockFixed(3)
        );
        assert_eq!("wigner".parse::<PlanKind>().unwrap(), PlanKind::Parity);
        assert_eq!(
            "corrected_wigner".parse::<PlanKind>().unwrap(),
            PlanKind::CorrectedParity
        );
        assert!("fock:x".parse::<PlanKind>().is_err());
    }

    #[test]
    fn exit_codes() {
        let e = |o: OrensError| exit_code(&anyhow::Error::from(o).context("outer"));
        assert_eq!(e(OrensError::DataMismatch("x".into())), EXIT_MISMATCH);
        assert_eq!(
            e(OrensError::SingularSystem { plan: "p".into() }),
            EXIT_NUMERICAL
        );
        assert_eq!(e(OrensError::InvalidGrid("g".into())), EXIT_USAGE);
        assert_eq!(exit_code(&anyhow::anyhow!("plain")), EXIT_USAGE);
    }
}
