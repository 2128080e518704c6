//! `forge`: command-line pipeline over the plantforge library.

mod commands;
mod config;
mod log;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use plantforge::{Error, ErrorKind};

#[derive(Debug, Parser)]
#[command(
    name = "forge",
    version,
    about = "Synthetic plant point clouds, grouping and evaluation"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// Root seed; every stage derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output location for the subcommand.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON pipeline config; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert an ASCII/CSV/PLY cloud into the standard sample format.
    Convert(commands::ConvertArgs),
    /// Assign samples of a manifest to splits.
    Split(commands::SplitArgs),
    /// Point and instance count distributions of a dataset.
    Stats(commands::StatsArgs),
    /// Generate synthetic trees from base-tree statistics.
    GenTree(commands::GenTreeArgs),
    /// Virtually scan a tree mesh.
    Scan(commands::ScanArgs),
    /// Elastic deformation variants of a sample.
    Deform(commands::DeformArgs),
    /// Group per-point model outputs into instances.
    Group(commands::GroupArgs),
    /// Evaluate predictions against ground truth.
    Eval(commands::EvalArgs),
    /// Assemble sim-to-real folds, subsets and manifests.
    Protocol(commands::ProtocolArgs),
}

const COMMANDS: [&str; 9] = [
    "convert", "split", "stats", "gen-tree", "scan", "deform", "group", "eval", "protocol",
];

fn config_path(args: &[String]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn fail(e: &Error) -> ExitCode {
    log::emit(
        "error",
        "forge",
        &e.to_string(),
        serde_json::json!({ "exit_code": exit_code(e) }),
    );
    ExitCode::from(exit_code(e))
}

fn main() -> ExitCode {
    let mut args: Vec<String> = std::env::args().collect();
    if let Some(path) = config_path(&args) {
        args = match config::splice(args, &path, &COMMANDS) {
            Ok(a) => a,
            Err(e) => return fail(&e),
        };
    }
    let matches = match Cli::command().try_get_matches_from(&args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(&Error::InvalidArgument(e.to_string()));
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
