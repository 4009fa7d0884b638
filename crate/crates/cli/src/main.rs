use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use twotime_cli::run::{compute_series, series_csv};
use twotime_cli::{execute, parse_scenario, write_atomic, Overrides, EXIT_CROSS_VALIDATION, EXIT_ERROR, EXIT_OK};
use twotime_core::correlators::Method;

#[derive(Parser)]
#[command(name = "twotime", version, about = "Two-time photon correlations of a single bosonic mode")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every method of a scenario, cross-validate and write CSV + report.
    Run {
        scenario: PathBuf,
        /// Method tag; repeat to select several. Replaces the file's list.
        #[arg(long = "method")]
        methods: Vec<Method>,
        #[arg(long)]
        seed: Option<u64>,
        /// Fock cutoff n_max.
        #[arg(long)]
        cutoff: Option<usize>,
        /// Directory for relative output paths.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse a scenario and print the resolved parameters.
    Validate { scenario: PathBuf },
    /// Regression series only, as CSV on stdout.
    Oracle {
        scenario: PathBuf,
        #[arg(long)]
        cutoff: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run {
            scenario,
            methods,
            seed,
            cutoff,
            out,
        } => {
            let ov = Overrides {
                methods,
                seed,
                cutoff,
                out_dir: out,
            };
            let sc = parse_scenario(&scenario, &ov)?;
            let outcome = execute(&sc)?;
            write_atomic(&sc.series_path, &outcome.csv)?;
            write_atomic(&sc.report_path, &outcome.report)?;
            log::info!("wrote {} and {}", sc.series_path.display(), sc.report_path.display());
            if outcome.failures.is_empty() {
                Ok(EXIT_OK)
            } else {
                for f in &outcome.failures {
                    eprintln!("cross-validation failure: {f}");
                }
                Ok(EXIT_CROSS_VALIDATION)
            }
        }
        Command::Validate { scenario } => {
            let sc = parse_scenario(&scenario, &Overrides::default())?;
            print!("{}", sc.describe());
            for d in &sc.defaults_applied {
                println!("default: {d}");
            }
            Ok(EXIT_OK)
        }
        Command::Oracle { scenario, cutoff } => {
            let ov = Overrides {
                cutoff,
                ..Default::default()
            };
            let sc = parse_scenario(&scenario, &ov)?;
            let reg = compute_series(&sc, Method::Regression)?;
            print!("{}", series_csv(std::slice::from_ref(&reg), &reg));
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    };
    ExitCode::from(code as u8)
}
