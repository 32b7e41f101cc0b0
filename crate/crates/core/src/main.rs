use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fgd_sim::experiment::{report, run_matrix, validate_config, write_atomic};

#[derive(Parser)]
#[command(name = "fgd-sim", version, about = "Run online-learning experiments under temporal domain shift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (scenario, algorithm, seed) cell of a config.
    Run {
        config: PathBuf,
        /// Number of cells run concurrently.
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record per-iteration gradient norms and forecast errors.
        #[arg(long)]
        trace: bool,
    },
    /// Check a config and print the parsed result.
    Validate { config: PathBuf },
    /// Rebuild the comparison table from a directory of ledgers.
    Report {
        dir: PathBuf,
        /// Where to write the table CSV (default: <dir>/report.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Validate { config } => match validate_config(&config) {
            Ok(c) => {
                println!("{c:#?}");
                ExitCode::SUCCESS
            }
            Err(errors) => {
                for e in errors {
                    eprintln!("error: {e}");
                }
                ExitCode::from(2)
            }
        },
        Command::Run {
            config,
            workers,
            out,
            trace,
        } => {
            let mut cfg = match validate_config(&config) {
                Ok(c) => c,
                Err(errors) => {
                    for e in errors {
                        eprintln!("error: {e}");
                    }
                    return ExitCode::from(2);
                }
            };
            if let Some(w) = workers {
                if w == 0 {
                    eprintln!("error: --workers must be >= 1");
                    return ExitCode::from(2);
                }
                cfg.workers = w;
            }
            if let Some(o) = out {
                cfg.output = o;
            }
            match run_matrix(&cfg, trace) {
                Ok(outcome) => {
                    for n in &outcome.notices {
                        eprintln!("notice: {n}");
                    }
                    for c in &outcome.cells {
                        for n in &c.notices {
                            eprintln!("notice: {n}");
                        }
                    }
                    print!("{}", outcome.table.summary());
                    println!("artifacts in {}", outcome.output.display());
                    if outcome.exit_code() == 0 {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::FAILURE
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Report { dir, out } => {
            let result = report(&dir).and_then(|table| {
                let path = out.unwrap_or_else(|| dir.join("report.csv"));
                write_atomic(&path, table.to_csv()?.as_bytes())?;
                Ok(table)
            });
            match result {
                Ok(table) => {
                    print!("{}", table.summary());
                    if table.any_failed() {
                        ExitCode::FAILURE
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
