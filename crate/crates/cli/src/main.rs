mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Overrides;

const THREADS_VAR: &str = "SEASONAL_SPLINE_THREADS";

/// Trend plus seasonal reconstruction from linear measurements.
#[derive(Debug, Parser)]
#[command(name = "seasonal-spline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sparse (TV-regularized) fit on a grid.
    Fit(Args),
    /// Quadratic (kernel) fit.
    Quadratic(Args),
    /// Refinement ladder with optimality and monotonicity checks.
    Converge(Args),
    /// Noisy measurements of a ground truth.
    Simulate(Args),
}

#[derive(Debug, clap::Args)]
struct Args {
    /// Run configuration (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Size of the dense evaluation grid.
    #[arg(long, value_name = "N")]
    probe_points: Option<usize>,
    /// Noise seed for `simulate`.
    #[arg(long, value_name = "K")]
    seed: Option<u64>,
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_VAR} must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let (verb, args) = match cli.command {
        Command::Fit(a) => ("fit", a),
        Command::Quadratic(a) => ("quadratic", a),
        Command::Converge(a) => ("converge", a),
        Command::Simulate(a) => ("simulate", a),
    };
    let ov = Overrides {
        out: args.out,
        probe_points: args.probe_points,
        seed: args.seed,
    };
    match commands::run(verb, &args.config, &ov) {
        Ok(outcome) => {
            for path in &outcome.artifacts {
                eprintln!("wrote {}", path.display());
            }
            eprintln!("{}", outcome.summary);
            ExitCode::from(outcome.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
