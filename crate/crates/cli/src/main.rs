use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rangeinv_cli::run::{output_root, print_runs, run, sweep, write_file};
use rangeinv_cli::suite::{audit_json, print_table, run_suite, Target};
use rangeinv_cli::ExperimentConfig;

#[derive(Parser)]
#[command(name = "rangeinv", version, about = "Range-invariant reconstruction of PDE coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured solver for every (delta, seed).
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the audit suite and write audit.json.
    Verify {
        #[arg(long, value_enum)]
        problem: Target,
        /// Defaults to audit.json under the output root.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run methods x deltas x seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let root = output_root(&cfg.output.dir);
            match run(&cfg, &root) {
                Ok(summary) => {
                    print_runs(&summary);
                    if summary.ok() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::FAILURE
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Sweep { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let summary = sweep(&cfg, &output_root(&cfg.output.dir));
            print_runs(&summary);
            if summary.ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Command::Verify { problem, json } => {
            let file = run_suite(problem);
            print_table(&file);
            let path = json.unwrap_or_else(|| output_root("output").join("audit.json"));
            if let Err(e) = write_file(&path, &audit_json(&file)) {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
            if file.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
