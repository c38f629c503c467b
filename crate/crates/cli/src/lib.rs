//! Command-line front end for `svexp-core`: TOML model configs in, CSV out.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::Report;
use config::{Overrides, RunConfig};
use error::{CliResult, ExitStatus};

#[derive(Debug, Parser)]
#[command(name = "svexp", version, about = "First-order stochastic volatility expansion and its Monte Carlo check")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expanded put prices per strike.
    Price(CommonArgs),
    /// Implied total variance smile per strike.
    Smile(CommonArgs),
    /// At-the-money skew with a finite-difference cross-check.
    Skew(CommonArgs),
    /// Monte Carlo convergence study over eps_list; exit 4 on FAIL.
    Validate(CommonArgs),
    /// Kernel regression of integrated variance on the terminal price.
    ConditionalIv(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent samples (antithetic pairs by default).
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub eps_list: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub strikes: Option<Vec<f64>>,
}

impl CommonArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            strikes: self.strikes.clone(),
            eps_list: self.eps_list.clone(),
            n_paths: self.paths,
            n_steps: self.steps,
            seed: self.seed,
        }
    }
}

impl Command {
    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Price(a)
            | Command::Smile(a)
            | Command::Skew(a)
            | Command::Validate(a)
            | Command::ConditionalIv(a) => a,
        }
    }
}

pub fn execute(command: &Command, cfg: &RunConfig) -> CliResult<Report> {
    match command {
        Command::Price(_) => commands::cmd_price(cfg),
        Command::Smile(_) => commands::cmd_smile(cfg),
        Command::Skew(_) => commands::cmd_skew(cfg),
        Command::Validate(_) => commands::cmd_validate(cfg),
        Command::ConditionalIv(_) => commands::cmd_conditional_iv(cfg),
    }
}

fn run_inner(cli: &Cli) -> CliResult<ExitStatus> {
    let args = cli.command.args();
    let cfg = RunConfig::load(&args.config, &args.overrides())?;
    let report = execute(&cli.command, &cfg)?;
    match &args.out {
        Some(path) => std::fs::write(path, &report.csv)?,
        None => std::io::stdout().write_all(report.csv.as_bytes())?,
    }
    eprintln!("{}", report.summary);
    Ok(report.status)
}

/// Runs one command, printing errors to stderr; returns the exit status.
pub fn run(cli: &Cli) -> ExitStatus {
    match run_inner(cli) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("svexp: {e}");
            e.exit_status()
        }
    }
}
