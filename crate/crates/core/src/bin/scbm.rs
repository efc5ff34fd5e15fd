//! Command-line front end for the SCBM experiments.
//!
//! Exit codes: 0 when every check passes, 2 for configuration errors, 3 when
//! a check fails, 1 for anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scbm::experiments::commands::{execute, Command, RunSettings};
use scbm::experiments::config::ConfigFile;
use scbm::Error;

#[derive(Parser)]
#[command(name = "scbm", version, about = "Super-coalescing Brownian motion experiments")]
struct Cli {
    /// Configuration file; defaults are used for anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `[run] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `[run] threads`.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides `[run] out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Exact generator duality and array-law comparisons.
    VerifyDuality,
    /// Extinction, mean, Laplace and entrance-law checks of the branching sampler.
    CsbpCheck,
    /// Monte Carlo duality checks for SCBM.
    ScbmDuality,
    /// Integral test, series and sequence construction.
    IntegralTest,
    /// Local survival ensembles for several growth functions.
    Survival,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::VerifyDuality => Command::VerifyDuality,
            Cmd::CsbpCheck => Command::CsbpCheck,
            Cmd::ScbmDuality => Command::ScbmDuality,
            Cmd::IntegralTest => Command::IntegralTest,
            Cmd::Survival => Command::Survival,
        }
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    let config = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let threads = match cli.threads {
        Some(t) => t,
        None => config.usize_or("run", "threads", 0)?,
    };
    if threads > 0 {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let settings = RunSettings::resolve(&config, cli.seed, cli.out)?;
    let command = Command::from(cli.command);
    let outcome = execute(command, &config, &settings)?;
    for c in &outcome.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("wrote {}", outcome.csv_path.display());
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e @ (Error::Config(_) | Error::UnknownKey { .. } | Error::Domain(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
