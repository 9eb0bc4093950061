use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use lipflow::oracles::list_oracles;
use lipflow::report::summary_table;
use lipflow::{load_scenario, run_scenario, RunOptions};

#[derive(Parser)]
#[command(
    name = "lipflow",
    version,
    about = "Numerical checks for flows of Lipschitz vector fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every check in a scenario and write its reports.
    Run {
        scenario: PathBuf,
        /// Output directory; defaults to the scenario's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Most checks running at once.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: u64,
        /// Multiplies every threshold.
        #[arg(long, default_value_t = 1.0, value_parser = positive)]
        tol_scale: f64,
    },
    /// Print the oracle catalog.
    Oracles,
    /// Load and validate a scenario without running it.
    Validate { scenario: PathBuf },
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got `{s}`")),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            jobs,
            tol_scale,
        } => {
            let s = load_scenario(&scenario)?;
            let opts = RunOptions {
                out,
                jobs: usize::try_from(jobs).unwrap_or(usize::MAX),
                tol_scale,
            };
            let result = run_scenario(&s, &opts).context("writing reports")?;
            print!("{}", summary_table(&result.outcomes));
            for o in &result.outcomes {
                if let lipflow::CheckOutcome::Error { label, message, .. } = o {
                    eprintln!("{label}: {message}");
                }
            }
            Ok(result.all_passed())
        }
        Command::Oracles => {
            print!("{}", list_oracles()?);
            Ok(true)
        }
        Command::Validate { scenario } => {
            let s = load_scenario(&scenario)?;
            println!("{}: ok ({} checks)", s.name, s.checks.len());
            Ok(true)
        }
    }
}
