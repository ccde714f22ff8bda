// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod evaluate;
mod identities;
mod output;
mod run;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Verification suites, kernel evaluation and minimizing-movement runs for
/// degenerate Kolmogorov diffusions.
#[derive(Debug, Parser)]
#[command(name = "kjko", version, about)]
struct Cli {
    /// Seed for every random draw (sample points, fault injection, perturbed starts).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for report files; created if missing.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for internal parallelism.
    #[arg(long, global = true, env = "KJKO_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check every exact matrix identity for orders 1..=n-max.
    Identities(identities::IdentitiesArgs),
    /// Evaluate the cost, its gradients and its PDE residual at one point pair.
    Cost(evaluate::CostArgs),
    /// Evaluate the fundamental solution, optionally with normalization and Dirac-limit sweeps.
    Kernel(evaluate::KernelArgs),
    /// Run the minimizing-movement scheme from a JSON configuration.
    Jko(JkoArgs),
}

#[derive(Debug, Args)]
struct JkoArgs {
    /// Path to the run configuration (JSON).
    config: PathBuf,
}

/// Bad arguments or configuration; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<Verdict> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    let out_dir = cli.out_dir.as_deref();
    match cli.command {
        Command::Identities(args) => identities::run(&args, cli.seed.unwrap_or(0), out_dir),
        Command::Cost(args) => evaluate::cost(&args, cli.seed.unwrap_or(0), out_dir),
        Command::Kernel(args) => evaluate::kernel(&args, out_dir),
        Command::Jko(args) => run::jko(&args.config, cli.seed, out_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(Verdict::Pass) => ExitCode::SUCCESS,
        Ok(Verdict::Fail) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
