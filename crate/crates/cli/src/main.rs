//! `drne`: command-line driver for distributionally robust equilibrium
//! seeking.
//!
//! Exit codes: 0 success, 1 uncertified, 2 config read, 3 validation,
//! 4 solver, 5 missing constants, 6 I/O.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "drne", version, about = "Distributionally robust Nash equilibrium solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Format {
    Csv,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the solver seed (`solve`, `certify --estimate`) or the macro
    /// seed (`evaluate`, `sweep`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created when missing.
    #[arg(long, env = "DRNE_OUT_DIR", default_value = "drne-out")]
    pub out: PathBuf,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Run the stochastic equilibrium-seeking iteration.
    Solve(Common),
    /// Check the strong monotonicity condition.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Estimate undeclared constants by sampling.
        #[arg(long)]
        estimate: bool,
        /// Random pairs used by --estimate.
        #[arg(long, default_value_t = 10_000)]
        estimate_samples: usize,
    },
    /// Compute a high-precision reference equilibrium.
    Oracle(Common),
    /// Run one out-of-sample experiment.
    Evaluate(Common),
    /// Compare risk-aversion scenarios over several macro seeds.
    Sweep(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(c) => commands::run("solve", &c, commands::solve),
        Command::Certify {
            common,
            estimate,
            estimate_samples,
        } => commands::run("certify", &common, |ctx| commands::certify(ctx, estimate, estimate_samples)),
        Command::Oracle(c) => commands::run("oracle", &c, commands::oracle),
        Command::Evaluate(c) => commands::run("evaluate", &c, commands::evaluate),
        Command::Sweep(c) => commands::run("sweep", &c, commands::sweep),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            for line in failure.message.lines() {
                eprintln!("error: {line}");
            }
            ExitCode::from(failure.code)
        }
    }
}
