//! `lmnfuse`: simulation, fusion, model fitting and diagnostics driven by
//! one JSON config per run.

mod commands;
mod config;
mod error;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "lmnfuse", version, about = "Coupled LMN tensor fusion of hyperspectral and multispectral images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving every output file.
    #[arg(long)]
    output_dir: PathBuf,
    /// Progress messages on stderr.
    #[arg(long)]
    verbose: bool,
}

impl RunArgs {
    fn context(&self) -> Context {
        Context {
            out: self.output_dir.clone(),
            verbose: self.verbose,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate or degrade an SRI into an HSI/MSI pair.
    Simulate(RunArgs),
    /// Recover the SRI from an HSI/MSI pair.
    Fuse(RunArgs),
    /// Fit block-term models to a single tensor.
    Fit(RunArgs),
    /// Compare an estimate against a reference.
    Metrics(RunArgs),
    /// Singular-value spectra of the three unfoldings.
    Spectrum(RunArgs),
    /// Finite-difference smoothness profiles.
    Smoothness(RunArgs),
    /// Fusion over a grid of regularization weights and ranks.
    Sweep(RunArgs),
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate(a) => commands::simulate(config::load(&a.config)?, &a.context()),
        Command::Fuse(a) => commands::fuse(config::load(&a.config)?, &a.context()),
        Command::Fit(a) => commands::fit_models(config::load(&a.config)?, &a.context()),
        Command::Metrics(a) => commands::metrics(config::load(&a.config)?, &a.context()),
        Command::Spectrum(a) => commands::spectrum(config::load(&a.config)?, &a.context()),
        Command::Smoothness(a) => commands::smoothness(config::load(&a.config)?, &a.context()),
        Command::Sweep(a) => sweep::sweep(config::load(&a.config)?, &a.context()),
    }
}

fn report(err: &CliError, code: u8) -> ExitCode {
    eprintln!("{}", err.to_json());
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(&CliError::Usage(e.render().to_string().trim().to_string()), 2),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e, 1),
    }
}
