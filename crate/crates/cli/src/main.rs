//! `fcul`: generate scenarios, run them, verify the engine's properties and
//! summarize results.
//!
//! Exit codes: 0 success, 1 verification failure, 2 invalid arguments,
//! 3 I/O failure, 4 internal invariant violation.

mod commands;
mod config;
mod error;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fcul_core::sim::VariantSelection;
use fcul_core::Precision;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "fcul", version, about = "Exact federated unlearning for ridge heads")]
struct Cli {
    /// TOML config file; flags take precedence over its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for client message formation.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic feature file and a scenario JSON.
    Gen(GenArgs),
    /// Run a scenario and write metrics, summary and event log.
    Run(RunArgs),
    /// Run the property suite and print one line per property.
    Verify(VerifyArgs),
    /// Summarize the outputs of a previous run.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    A,
    B,
    Both,
    Approx,
}

impl From<VariantArg> for VariantSelection {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::A => VariantSelection::A,
            VariantArg::B => VariantSelection::B,
            VariantArg::Both => VariantSelection::Both,
            VariantArg::Approx => VariantSelection::Approx,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F32 => Precision::Single,
            PrecisionArg::F64 => Precision::Double,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PlanArg {
    None,
    Chunked,
    Targeted,
    Burst,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    #[arg(long, default_value_t = 10)]
    pub c: usize,
    #[arg(long, default_value_t = 10)]
    pub clients: usize,
    /// Dirichlet concentration of the class split across clients.
    #[arg(long, default_value_t = 0.3, conflicts_with = "groups")]
    pub alpha: f64,
    /// Writer-style grouping into this many contiguous blocks instead of Dirichlet.
    #[arg(long)]
    pub groups: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Distance of each class mean from the origin.
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    /// Event pattern after the initial add round.
    #[arg(long, value_enum, default_value_t = PlanArg::Chunked)]
    pub plan: PlanArg,
    /// Chunked: fraction of the original retained set deleted per step.
    #[arg(long, default_value_t = 0.2)]
    pub fraction: f64,
    /// Chunked and targeted: number of deletion rounds.
    #[arg(long, default_value_t = 4)]
    pub steps: usize,
    /// Targeted: class whose samples are deleted.
    #[arg(long, default_value_t = 0)]
    pub class: usize,
    /// Burst: number of single-sample deletion rounds.
    #[arg(long, default_value_t = 50)]
    pub count: usize,
    /// Burst: re-add the deleted samples in reverse order.
    #[arg(long)]
    pub addback: bool,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    #[arg(long, value_enum)]
    pub precision: Option<PrecisionArg>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario JSON written by `gen`.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Feature file; defaults to the one named in the scenario.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Server variant(s), overriding the scenario's.
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Arithmetic precision, overriding the scenario's.
    #[arg(long, value_enum)]
    pub precision: Option<PrecisionArg>,
    /// Truncation rank of approximate add rounds.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Approximate lane: rebuild exactly every this many rounds (0 never).
    #[arg(long)]
    pub reset_every: Option<u32>,
    /// Noise variance of the posterior certificate [default: 1].
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Ridge strength, overriding the scenario's.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Variant B: rebuild the inverse when audited drift exceeds this [default: 1e-6].
    #[arg(long)]
    pub drift_threshold: Option<f64>,
    /// Variant B: rebuild after a downdate whose condition estimate exceeds this [default: 1e8].
    #[arg(long)]
    pub condition_threshold: Option<f64>,
    /// Variant B: audit drift every this many rounds, 0 never [default: 32].
    #[arg(long)]
    pub audit_every: Option<u32>,
    /// Skip the per-round KL certificate.
    #[arg(long)]
    pub no_certificates: bool,
    /// Output directory for metrics.csv, summary.json and events.jsonl.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Override every tolerance-based property's threshold.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Run a single suite by name.
    #[arg(long)]
    pub only: Option<String>,
    /// List suite names and exit.
    #[arg(long)]
    pub list: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run output directory containing metrics.csv and summary.json.
    pub dir: PathBuf,
}

fn dispatch(cli: Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let file = match &cli.config {
        Some(path) => config::Config::load(path)?,
        None => config::Config::default(),
    };
    match cli.command {
        Command::Gen(args) => commands::gen(&args, file),
        Command::Run(args) => commands::run(&args, file),
        Command::Verify(args) => verify::verify(&args),
        Command::Report(args) => commands::report(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // clap exits 0 for --help/--version and 2 for usage errors.
        Err(e) => e.exit(),
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fcul: {e}");
            e.exit_code()
        }
    }
}
