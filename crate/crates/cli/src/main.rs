//! `uqd`: command-line front end for trajectory-equivalence checks.
//!
//! Every report is JSON on stdout; logs and diagnostics go to stderr.
//! Exit codes: 0 success or verdict holds, 1 verdict fails, 2 usage error
//! (including unreadable files), 3 numerical or validation error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "uqd",
    version,
    about = "Decide whether two master-equation representations give the same quantum-jump trajectories"
)]
pub struct Cli {
    /// Absolute tolerance for matrix and scalar comparisons.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub atol: f64,
    /// Relative tolerance for matrix and scalar comparisons.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub rtol: f64,
    /// Master seed for every randomized step.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Write the report to this path instead of stdout (a directory for `simulate`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Suppress log lines on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Indent JSON and print a human summary on stderr.
    #[arg(long, global = true)]
    pub pretty: bool,
    /// Worker threads for trajectory ensembles (default: available cores).
    /// The UQD_THREADS environment variable takes precedence.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compare two representations at a chosen equivalence level.
    Check(CheckArgs),
    /// Partition the jump operators of a representation into SJEDs.
    Sjed { rep: PathBuf },
    /// Replace every SJED by a minimal set of operators.
    Minimize { rep: PathBuf },
    /// Apply or extract block isometries.
    #[command(subcommand)]
    Gauge(GaugeCommand),
    /// Simulate a trajectory ensemble and write it as JSON lines.
    Simulate(SimulateArgs),
    /// Statistically compare ensembles simulated from two representations.
    CompareEnsembles(CompareArgs),
    /// Compare rates, destinations and composite actions on random states.
    RateScan(RateScanArgs),
    /// Emit one of the built-in qutrit representations.
    Example(ExampleArgs),
    /// Tabulate jump rates over real-coefficient qutrit states as CSV.
    Fig1(Fig1Args),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CheckLevel {
    /// Same master equation.
    Qme,
    /// Same unlabelled trajectories.
    T1,
    /// Same labelled trajectories up to a jump permutation.
    T2,
    /// Same partially-labelled trajectories for the given SJED permutation.
    T3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EnsembleLevel {
    T1,
    T2,
    T3,
}

/// Comma-separated 1-based permutation, stored 0-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Perm(pub Vec<usize>);

fn parse_perm(s: &str) -> Result<Perm, String> {
    s.split(',')
        .map(|t| match t.trim().parse::<usize>() {
            Ok(0) => Err("indices are 1-based".to_string()),
            Ok(k) => Ok(k - 1),
            Err(e) => Err(format!("{t:?}: {e}")),
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Perm)
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(long)]
    pub rep_a: PathBuf,
    #[arg(long)]
    pub rep_b: PathBuf,
    #[arg(long, value_enum, default_value_t = CheckLevel::T1)]
    pub level: CheckLevel,
    /// SJED permutation for t3, e.g. "2,1" (default: the one found for t1).
    #[arg(long, value_parser = parse_perm)]
    pub perm_c: Option<Perm>,
    /// Enumerate every jump permutation, up to 10000.
    #[arg(long)]
    pub all_perms: bool,
}

#[derive(Subcommand, Debug)]
pub enum GaugeCommand {
    /// Build J_j = Σ_k V_jk J'_k (+ shift) from a minimal representation.
    Apply {
        #[arg(long)]
        rep_min: PathBuf,
        /// Isometry document: matrix, source_blocks and optionally target_blocks and block_map.
        #[arg(long)]
        isometry: PathBuf,
        /// Real Hamiltonian shift r (H ↦ H + r𝟙).
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        shift: f64,
    },
    /// Recover the block isometry that maps a minimal representation onto another.
    Extract {
        #[arg(long)]
        rep_min: PathBuf,
        #[arg(long)]
        rep: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    pub rep: PathBuf,
    /// Initial state: a 0-based basis index or a JSON file with [re, im] amplitudes.
    #[arg(long)]
    pub psi0: String,
    #[arg(long)]
    pub tmax: f64,
    #[arg(long, default_value_t = 1000)]
    pub ntraj: usize,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long)]
    pub rep_a: PathBuf,
    #[arg(long)]
    pub rep_b: PathBuf,
    #[arg(long, value_enum, default_value_t = EnsembleLevel::T1)]
    pub level: EnsembleLevel,
    #[arg(long, default_value_t = 10_000)]
    pub ntraj: usize,
    #[arg(long)]
    pub tmax: f64,
    /// Initial state: a 0-based basis index or a JSON file (default: uniform superposition).
    #[arg(long)]
    pub psi0: Option<String>,
    /// JSON list of {name, matrix} observables (default: all basis projectors).
    #[arg(long)]
    pub observables: Option<PathBuf>,
    /// Comma-separated observation times (default: tmax/4, tmax/2, tmax).
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    /// Jump permutation for t2 or SJED permutation for t3 (default: from the algebraic check).
    #[arg(long, value_parser = parse_perm)]
    pub perm: Option<Perm>,
    /// Family-wise significance level.
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Seed for ensemble A (default: --seed).
    #[arg(long)]
    pub seed_a: Option<u64>,
    /// Seed for ensemble B (default: --seed + 1).
    #[arg(long)]
    pub seed_b: Option<u64>,
}

#[derive(Args, Debug)]
pub struct RateScanArgs {
    #[arg(long)]
    pub rep_a: PathBuf,
    #[arg(long)]
    pub rep_b: PathBuf,
    /// Number of Haar-random states.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Fixed SJED permutation (default: the one found for t1, else per-state matching).
    #[arg(long, value_parser = parse_perm)]
    pub perm_c: Option<Perm>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExampleName {
    /// Three resets and two proportional dephasing operators.
    QutritA,
    /// Two reset sets with rotated reset states.
    QutritB,
}

#[derive(Args, Debug, Clone)]
pub struct QutritAArgs {
    /// Reset angle θ [default: π/6, or π/2 for qutrit-b].
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_3, allow_negative_numbers = true)]
    pub vartheta: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phi: f64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub lambda: f64,
}

#[derive(Args, Debug)]
pub struct ExampleArgs {
    #[arg(value_enum)]
    pub name: ExampleName,
    /// qutrit-a: emit the three-operator minimal form.
    #[arg(long)]
    pub minimal: bool,
    /// qutrit-b: emit the companion with reset states |0⟩ and |2⟩.
    #[arg(long)]
    pub tilde: bool,
    #[command(flatten)]
    pub a: QutritAArgs,
    #[arg(long, default_value_t = 0.4)]
    pub gamma1: f64,
    #[arg(long, default_value_t = 0.6)]
    pub gamma2: f64,
    #[arg(long, default_value_t = 0.8)]
    pub gamma3: f64,
    #[arg(long, default_value_t = 0.3)]
    pub gamma1_tilde: f64,
}

#[derive(Args, Debug)]
pub struct Fig1Args {
    #[command(flatten)]
    pub a: QutritAArgs,
    /// Grid points in the polar angle β ∈ [0, π].
    #[arg(long, default_value_t = 19)]
    pub n_polar: usize,
    /// Grid points in the azimuth α ∈ [0, 2π).
    #[arg(long, default_value_t = 36)]
    pub n_azimuth: usize,
}

fn configure_threads(flag: Option<usize>) -> Result<(), commands::Failure> {
    let threads = match std::env::var("UQD_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|e| commands::Failure::Usage(format!("UQD_THREADS={v:?}: {e}")))?,
        ),
        Err(_) => flag,
    };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| commands::Failure::Usage(format!("cannot configure {n} threads: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads(cli.threads).and_then(|_| commands::run(&cli));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("uqd: {f}");
            ExitCode::from(f.code())
        }
    }
}
