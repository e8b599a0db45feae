//! `fraclab`: batch driver for nonlocal operator experiments.
//!
//! Exit codes: 0 success, 1 fixture failure, 2 config error, 3 solver
//! non-convergence.

mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fraclab_core::fixtures::ValidationConfig;

use commands::{CliError, Status};
use config::{ConfigError, Ini};

#[derive(Parser)]
#[command(
    name = "fraclab",
    version,
    about = "Nonlocal degenerate elliptic operator laboratory"
)]
struct Cli {
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config (flat INI).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Vanishing-viscosity solve; writes solution.csv and report.txt.
    Solve(ConfigArg),
    /// Operator sweep over interior nodes; writes eval.csv.
    Eval(ConfigArg),
    /// Hölder or flatness probe; writes probe.csv and report.txt.
    Probe(ConfigArg),
    /// Odd-kink blow-up table; writes blowup.csv and report.txt.
    Counterexample(ConfigArg),
    /// Built-in fixture suite; writes validate.txt.
    Validate {
        /// Grid spacing multiplier relative to h = 1/512 (tolerances scale with it).
        #[arg(long, default_value_t = 1)]
        coarsen: u32,
        /// Multiply the fractional Laplacian kernel by this factor (fault injection).
        #[arg(long, value_name = "FACTOR")]
        tamper_normalization: Option<f64>,
    },
}

fn load(path: &Path) -> Result<Ini, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(ConfigError::bare(format!("cannot read {}: {e}", path.display()))))?;
    Ini::parse(&text).map_err(|e| {
        CliError::Config(ConfigError {
            line: e.line,
            msg: format!("{}: {}", path.display(), e.msg),
        })
    })
}

fn run(cli: Cli) -> Result<Status, CliError> {
    let out = cli.out.as_path();
    match cli.command {
        Command::Solve(a) => commands::run_solve(&load(&a.config)?, out),
        Command::Eval(a) => commands::run_eval(&load(&a.config)?, out),
        Command::Probe(a) => commands::run_probe(&load(&a.config)?, out),
        Command::Counterexample(a) => commands::run_counterexample(&load(&a.config)?, out),
        Command::Validate {
            coarsen,
            tamper_normalization,
        } => {
            let factor = tamper_normalization.unwrap_or(1.0);
            if !(factor > 0.0 && factor.is_finite()) {
                return Err(CliError::Config(ConfigError::bare(format!(
                    "--tamper-normalization {factor} must be positive"
                ))));
            }
            let cfg = ValidationConfig {
                coarsen,
                normalization_factor: factor,
            };
            commands::run_validate(&cfg, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("config error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
