//! `amped`: scenario-driven runs of the coupled-emitter simulation engine.
//!
//! Exit codes: 0 on success, 2 on validation errors (bad scenario or table),
//! 3 on physics-regime errors (a generator outside the stable linear regime),
//! 1 on anything else.

mod error;
mod runner;
mod scenario;
mod table;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{validation, CliError};
use crate::scenario::{Mode, Scenario};

#[derive(Parser)]
#[command(name = "amped", version, about = "Gain-modified collective emission, from medium model to CSV")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for CSV artifacts (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Reject unknown scenario keys (the default).
    #[arg(long, conflicts_with = "lenient")]
    strict: bool,
    /// Demote unknown scenario keys to warnings.
    #[arg(long)]
    lenient: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sweep the medium-derived rates over frequency.
    Rates(RunArgs),
    /// Integrate the master equation from the scenario's initial state.
    Dynamics(RunArgs),
    /// Solve the stationary state at every parameter point.
    Steady(RunArgs),
    /// Compute stationary emission spectra and their detected lines.
    Spectrum(RunArgs),
    /// Tabulate plateau and stationary populations over the parameter product.
    Sweep(RunArgs),
    /// Check an external rate table against the scenario's medium.
    Compare {
        #[command(flatten)]
        args: RunArgs,
        /// CSV rate table to check.
        #[arg(long)]
        table: PathBuf,
    },
}

fn main() {
    env_logger::Builder::from_default_env().format_timestamp(None).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let (args, mode, table) = match &cli.cmd {
        Cmd::Rates(a) => (a, Mode::Rates, None),
        Cmd::Dynamics(a) => (a, Mode::Dynamics, None),
        Cmd::Steady(a) => (a, Mode::Steady, None),
        Cmd::Spectrum(a) => (a, Mode::Spectrum, None),
        Cmd::Sweep(a) => (a, Mode::Sweep, None),
        Cmd::Compare { args, table } => (args, Mode::Rates, Some(table.clone())),
    };
    let strict = !args.lenient;
    let scenario = Scenario::load(&args.scenario, strict)?;
    // A scenario may pin its mode; the subcommand must then agree (compare
    // consumes rates-mode scenarios).
    if let Some(m) = scenario.run.mode {
        if m != mode {
            return Err(validation(format!(
                "scenario sets `run.mode = \"{}\"` but the {} subcommand was invoked",
                m.label(),
                if table.is_some() { "compare" } else { mode.label() }
            )));
        }
    }
    match table {
        Some(t) => runner::run_compare(&scenario, &t, &args.out),
        None => runner::execute(mode, &scenario, &args.out),
    }
}
