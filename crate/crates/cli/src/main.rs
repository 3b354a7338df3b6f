mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, Overrides};
use error::CliError;

#[derive(Parser)]
#[command(name = "vmmma", version, about = "Simulate and verify volatility modulated mixed moving average fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding run.master_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding output.dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replications, overriding run.n_reps.
    #[arg(long, global = true)]
    reps: Option<usize>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Field samples and a Monte Carlo summary.
    Simulate,
    /// Analytic quantities against Monte Carlo, as a JSON report.
    Analyze,
    /// Moving-average kernel for a target covariance.
    DesignKernel,
    /// Multi-self-similar fields, covariance and spectral tables.
    Lamperti,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli.common.config.ok_or_else(|| CliError::Config("--config is required".into()))?;
    let overrides = Overrides { seed: cli.common.seed, out: cli.common.out, reps: cli.common.reps };
    let cfg = ExperimentConfig::load(&path, &overrides)?;
    let quiet = cli.common.quiet;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, quiet),
        Command::Analyze => commands::analyze(&cfg, quiet),
        Command::DesignKernel => commands::design_kernel(&cfg, quiet),
        Command::Lamperti => commands::lamperti(&cfg, quiet),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
