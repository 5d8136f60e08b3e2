mod analysis;
mod classify;
mod config;
mod portrait;
mod profile;
mod sweep;
mod verify;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Usage;

/// Radial k-Yamabe soliton explorer: orbit classification, phase portraits,
/// profiles, verification suites and parameter sweeps.
#[derive(Debug, Parser)]
#[command(name = "ksol", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the orbit leaving the origin and classify it (JSON report)
    Classify(classify::ClassifyArgs),
    /// Vector field, nullclines, critical points and sample orbits (CSV)
    Portrait(portrait::PortraitArgs),
    /// Profile u(r) with eigenvalues and sigma_k (CSV plus JSON summary)
    Profile(profile::ProfileArgs),
    /// Run every invariant check; exit 1 on any failure
    Verify(verify::VerifyArgs),
    /// Classify over a grid of rho (or rho/theta) and alpha values
    Sweep(sweep::SweepArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Classify(a) => classify::run(a).map(|()| true),
        Command::Portrait(a) => portrait::run(a).map(|()| true),
        Command::Profile(a) => profile::run(a).map(|()| true),
        Command::Verify(a) => verify::run(a),
        Command::Sweep(a) => sweep::run(a).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if e.downcast_ref::<Usage>().is_some() => {
            eprintln!("ksol: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("ksol: error: {e:#}");
            ExitCode::from(1)
        }
    }
}
