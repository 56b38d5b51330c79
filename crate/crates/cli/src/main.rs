mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "conroute",
    about = "Constructive routing with local-consequence scoring",
    arg_required_else_help = true
)]
pub struct Cli {
    /// Seed for every random choice made by the command [default: 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate random instances as native JSON files.
    Generate(GenerateArgs),
    /// Check instance files for structural and feasibility problems.
    Validate(ValidateArgs),
    /// Train a policy and write a checkpoint.
    Train(TrainArgs),
    /// Decode one instance with a checkpoint.
    Solve(SolveArgs),
    /// Decode every instance in a directory and report gaps.
    Eval(EvalArgs),
    /// Replay a solution against an instance.
    Verify(VerifyArgs),
    /// Run one of the numeric self-checks.
    Oracle(OracleArgs),
    /// Run a mechanism probe on a checkpoint.
    Diagnose(DiagnoseArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value = "cvrptw")]
    pub task: String,
    /// Customers per instance.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file with generator latents, or a latent prior under `"prior"`.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Instance file or directory.
    #[arg(long = "in")]
    pub input: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub task: Option<String>,
    /// JSON document with training fields and an optional `"policy"` object.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_checkpoint: PathBuf,
    /// Start from the weights of an existing checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Customers per generated training instance.
    #[arg(long)]
    pub customers: Option<usize>,
    /// Train on the instance files in this directory instead of generating.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Greedy,
    Sample,
    Beam,
    Aug8,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "greedy")]
    pub mode: ModeArg,
    /// Sample count or beam width.
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Solution JSON; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Route plot.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// CSV with `name,ref_cost` rows.
    #[arg(long)]
    pub refs: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "greedy")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Report CSV; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub solution: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CheckArg {
    A2,
    Softtop1,
    Grad,
    ExactGap,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long, value_enum)]
    pub check: CheckArg,
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ProbeArg {
    Translation,
    Modulation,
    Weights,
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    #[arg(long, value_enum)]
    pub probe: ProbeArg,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory of instance files.
    #[arg(long)]
    pub instances: PathBuf,
    /// Output directory for CSV and SVG files.
    #[arg(long)]
    pub out: PathBuf,
}

fn long_version() -> String {
    format!(
        "{}\ncheckpoint format {}\nprofile {}\ntarget {}-{}",
        env!("CARGO_PKG_VERSION"),
        conroute_core::policy::CHECKPOINT_VERSION,
        if cfg!(debug_assertions) { "debug" } else { "release" },
        std::env::consts::ARCH,
        std::env::consts::OS,
    )
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<std::io::Error>())
        .any(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}

fn main() -> ExitCode {
    let matches = Cli::command()
        .version(env!("CARGO_PKG_VERSION"))
        .long_version(long_version())
        .get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
