//! `lab`: command-line front end for the ergolab laboratory.
//!
//! Every command prints one JSON line on stdout and writes its artifacts to
//! `--out-dir` (default `lab-out`). Exit codes: 0 success, 2 invalid input,
//! 3 budget or precision failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ergolab::LabError;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "lab", version, about = "Finite-system laboratory for box seminorms and sparse corner averages")]
pub struct Cli {
    /// Experiment configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for every randomized input.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Artifact directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Wall-clock budget; exceeding it turns the exit code into 3.
    #[arg(long, global = true)]
    pub budget_ms: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Box seminorm of an observable.
    Seminorm(SeminormArgs),
    /// Dual function and the pairing identity.
    Dual(SeminormArgs),
    /// Cubic measure, optionally checking duality with the seminorm.
    Cube(CubeArgs),
    /// Magic extension, optionally checking the seminorm/factor equivalence.
    Magic(MagicArgs),
    /// Box norm of a grid function.
    GridNorm(GridNormArgs),
    /// Inverse-theorem witness for a grid function.
    InverseWitness(WitnessArgs),
    /// Regularity decomposition of a grid function.
    Regularity(RegularityArgs),
    /// Corner counts and popular-difference scans.
    #[command(subcommand)]
    Corners(CornersCommand),
    /// Finite-scale checks of limiting identities.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Sequence utilities.
    #[command(subcommand)]
    Seq(SeqCommand),
}

#[derive(Args, Debug, Clone)]
pub struct SystemArgs {
    /// Config file holding the [system] (and optionally [observables]) section.
    #[arg(long)]
    pub system: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SeminormArgs {
    #[command(flatten)]
    pub sys: SystemArgs,
    /// Observable spec or the name of a configured observable.
    #[arg(long)]
    pub f: Option<String>,
    /// Words such as `T2*T1^-1,T2,T2`.
    #[arg(long)]
    pub words: Option<String>,
}

#[derive(Args, Debug)]
pub struct CubeArgs {
    #[command(flatten)]
    pub base: SeminormArgs,
    #[arg(long)]
    pub check_duality: bool,
}

#[derive(Args, Debug)]
pub struct MagicArgs {
    #[command(flatten)]
    pub sys: SystemArgs,
    #[arg(long)]
    pub words: Option<String>,
    #[arg(long)]
    pub check_property: bool,
    /// Seeded functions on the extension to test.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
}

#[derive(Args, Debug)]
pub struct GridNormArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Directions such as `e1:N,e2:N,e2:3`.
    #[arg(long)]
    pub dirs: Option<String>,
    /// Monte Carlo estimate with this many samples instead of exact evaluation.
    #[arg(long)]
    pub mc: Option<usize>,
}

#[derive(Args, Debug)]
pub struct WitnessArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// `box` or `u2`.
    #[arg(long, default_value = "box")]
    pub kind: String,
    /// Sampled anchors in dimension three and up.
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
}

#[derive(Args, Debug)]
pub struct RegularityArgs {
    /// Grid function; defaults to random signs on `[-n, n]^ell`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub ell: usize,
    #[arg(long, default_value_t = 64)]
    pub cap: usize,
}

#[derive(Subcommand, Debug)]
pub enum CornersCommand {
    /// Scan corner densities of a planar set along a sequence.
    Scan(ScanArgs),
    /// Scan triple-intersection densities in a finite system.
    Popular(PopularArgs),
    /// Fraction of good shifts for a grid of tolerances.
    Khintchine(KhintchineArgs),
    /// Count corners of a planar set for one shift.
    Count(CountArgs),
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    #[arg(long)]
    pub set: PathBuf,
    #[arg(long, default_value = "1,0", allow_hyphen_values = true)]
    pub v1: String,
    #[arg(long, default_value = "0,1", allow_hyphen_values = true)]
    pub v2: String,
    #[arg(long)]
    pub seq: Option<String>,
    #[arg(long = "N")]
    pub n: Option<String>,
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PopularArgs {
    #[command(flatten)]
    pub sys: SystemArgs,
    /// Set spec: `0..5,9` or `random p=0.5 seed=3`.
    #[arg(long = "A")]
    pub a: Option<String>,
    #[arg(long)]
    pub seq: Option<String>,
    #[arg(long = "N")]
    pub n: Option<String>,
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Args, Debug)]
pub struct KhintchineArgs {
    #[command(flatten)]
    pub sys: SystemArgs,
    #[arg(long = "A")]
    pub a: Option<String>,
    #[arg(long)]
    pub seq: Option<String>,
    #[arg(long = "N")]
    pub n: Option<String>,
    #[arg(long, default_value = "0.005,0.01,0.02,0.05,0.1")]
    pub eps_grid: String,
}

#[derive(Args, Debug)]
pub struct CountArgs {
    #[arg(long)]
    pub set: PathBuf,
    #[arg(long, default_value = "1,0", allow_hyphen_values = true)]
    pub v1: String,
    #[arg(long, default_value = "0,1", allow_hyphen_values = true)]
    pub v2: String,
    #[arg(long, allow_hyphen_values = true)]
    pub shift: i128,
}

#[derive(Args, Debug)]
pub struct TripleArgs {
    #[command(flatten)]
    pub sys: SystemArgs,
    #[arg(long)]
    pub f0: Option<String>,
    #[arg(long)]
    pub f1: Option<String>,
    #[arg(long)]
    pub f2: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum VerifyCommand {
    /// Averages along a(n) against averages along n.
    Identity(IdentityArgs),
    /// Factorial double-limit scheme.
    Factorial(FactorialArgs),
    /// Exponential sums e(beta a(n)).
    Weyl(WeylArgs),
    /// Skew-product orbit averages along a(n) against along n.
    Nil(NilArgs),
    /// Linear average against the controlling seminorms.
    Linear(LinearArgs),
}

#[derive(Args, Debug)]
pub struct IdentityArgs {
    #[command(flatten)]
    pub triple: TripleArgs,
    #[arg(long)]
    pub seq: Option<String>,
    #[arg(long = "Ns")]
    pub ns: Option<String>,
    /// `M..N` windows meaning `[M, N)`; replaces the Cesàro ladder.
    #[arg(long)]
    pub windows: Option<String>,
}

#[derive(Args, Debug)]
pub struct FactorialArgs {
    #[command(flatten)]
    pub triple: TripleArgs,
    /// Polynomial coefficients, constant first.
    #[arg(long, allow_hyphen_values = true)]
    pub p: Option<String>,
    #[arg(long)]
    pub kmax: Option<u32>,
    #[arg(long = "N", default_value = "1000")]
    pub n: String,
}

#[derive(Args, Debug)]
pub struct WeylArgs {
    #[arg(long)]
    pub seq: Option<String>,
    /// Decimal, `p/q`, or `sqrt2m1`.
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long = "Ns")]
    pub ns: Option<String>,
}

#[derive(Args, Debug)]
pub struct NilArgs {
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub seq: Option<String>,
    #[arg(long = "Ns")]
    pub ns: Option<String>,
    /// Trigonometric polynomial such as `1*(1,0) + 1*(0,1)`.
    #[arg(long = "F")]
    pub f: Option<String>,
    /// Starting point `x,y` (decimals or ratios).
    #[arg(long, default_value = "0,0")]
    pub x0: String,
}

#[derive(Args, Debug)]
pub struct LinearArgs {
    #[command(flatten)]
    pub triple: TripleArgs,
    /// Additional seeded random unimodular triples.
    #[arg(long, default_value_t = 0)]
    pub trials: usize,
}

#[derive(Subcommand, Debug)]
pub enum SeqCommand {
    /// Least n_k with k! | p(n_k).
    Nk(NkArgs),
    /// Values a(n) for n in [from, to].
    Eval(EvalArgs),
    /// Histogram of a(n) mod q for n <= N.
    Residues(ResidueArgs),
    /// Bounded intersectivity check.
    Intersective(IntersectiveArgs),
    /// Log-away classification of a Hardy sequence.
    LogAway(LogAwayArgs),
}

#[derive(Args, Debug)]
pub struct NkArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub p: String,
    #[arg(long)]
    pub k: u32,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub seq: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub from: u64,
    #[arg(long, default_value_t = 10)]
    pub to: u64,
}

#[derive(Args, Debug)]
pub struct ResidueArgs {
    #[arg(long)]
    pub seq: Option<String>,
    #[arg(long)]
    pub q: u64,
    #[arg(long = "N")]
    pub n: String,
}

#[derive(Args, Debug)]
pub struct IntersectiveArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub p: String,
    #[arg(long, default_value_t = ergolab::sequences::DEFAULT_PRIME_BOUND)]
    pub prime_bound: u64,
    #[arg(long, default_value_t = ergolab::sequences::DEFAULT_LIFT_BOUND)]
    pub lift_bound: u32,
}

#[derive(Args, Debug)]
pub struct LogAwayArgs {
    #[arg(long)]
    pub seq: String,
}

fn fail(command: &str, err: &LabError) -> ExitCode {
    let code = err.exit_code();
    println!("{}", json!({"command": command, "status": "error", "exit_code": code, "error": err.to_string()}));
    eprintln!("lab: {err}");
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            if code == 0 {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            println!("{}", json!({"status": "error", "exit_code": 2, "error": e.kind().to_string()}));
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    let name = commands::name(&cli.command);
    if let Some(w) = cli.workers {
        if w == 0 {
            return fail(&name, &LabError::invalid("--workers must be at least 1"));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            return fail(&name, &LabError::invalid(format!("cannot size the worker pool: {e}")));
        }
    }
    match commands::run(&cli, &argv) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(&name, &e),
    }
}
