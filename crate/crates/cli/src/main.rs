//! `ricci`: experiments on coarse Ricci curvature of diffusions on model
//! manifolds.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 numerical error.
//! Errors are reported on stderr as one JSON line.

mod commands;
mod config;
mod error;
mod parse;
mod report;

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Params;
use error::CliError;

#[derive(Parser)]
#[command(name = "ricci", version, about = "Coarse Ricci curvature, coupled simulation and spectral-gap bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Two-point or directional curvature κ (formula, limit or Monte Carlo).
    Kappa(Params),
    /// Optimal Gaussian coupling of two covariances for a bilinear cost.
    Coupling(Params),
    /// Coupled paths and the contraction-identity defect.
    Simulate(Params),
    /// Low spectrum of a discretized reversible generator.
    Spectrum(Params),
    /// Spectral gap against every applicable lower bound.
    Bounds(Params),
    /// Condition (H) along random geodesics.
    CheckH(Params),
    /// Variance of a 1-Lipschitz function on a sphere against its bound.
    Variance(Params),
    /// Runs a JSON list of configs and aggregates their rows.
    Sweep(Params),
}

impl Command {
    fn split(self) -> (&'static str, Params) {
        match self {
            Command::Kappa(p) => ("kappa", p),
            Command::Coupling(p) => ("coupling", p),
            Command::Simulate(p) => ("simulate", p),
            Command::Spectrum(p) => ("spectrum", p),
            Command::Bounds(p) => ("bounds", p),
            Command::CheckH(p) => ("check-h", p),
            Command::Variance(p) => ("variance", p),
            Command::Sweep(p) => ("sweep", p),
        }
    }
}

fn execute(name: &str, flags: Params) -> Result<(), CliError> {
    let params = flags.resolve()?;
    if let Some(c) = &params.command {
        if c != name {
            return Err(CliError::Validation(format!("config is for '{c}' but the subcommand is '{name}'")));
        }
    }
    let report = commands::run(name, &params)?;
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    match &params.output {
        Some(prefix) => {
            report.write(prefix)?;
            if let Some(text) = &report.text {
                print!("{text}");
            }
        }
        None => {
            std::io::stdout().write_all(&report.main.to_csv()?).map_err(io)?;
            if let Some(text) = &report.text {
                eprint!("{text}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, params) = cli.command.split();
    match execute(name, params) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
