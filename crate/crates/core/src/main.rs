use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use grasskit::experiment::{self, ExperimentConfig};
use grasskit::GkError;

#[derive(Parser)]
#[command(name = "grasskit", version, about = "Seeded Grassmannian geometry and incidence-counting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and print its JSON report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; falls back to GRASSKIT_WORKERS, then the config.
        #[arg(long, env = "GRASSKIT_WORKERS")]
        workers: Option<usize>,
        /// Report path; the report is still printed to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV table path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Parse and constraint-check a config, then print it normalized.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn fail(e: &GkError) -> ExitCode {
    let record = serde_json::json!({
        "error": { "kind": e.kind(), "message": e.to_string(), "exit_code": e.exit_code() }
    });
    eprintln!("{record}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, workers, out, csv } => {
            let mut cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if workers.is_some() {
                cfg.workers = workers;
            }
            if out.is_some() {
                cfg.out = out;
            }
            if csv.is_some() {
                cfg.csv = csv;
            }
            match experiment::run(&cfg) {
                Ok(report) => {
                    print!("{}", report.to_json());
                    for c in &report.checks {
                        eprintln!("{} {}: {}", if c.passes { "PASS" } else { "FAIL" }, c.name, c.detail);
                    }
                    if report.passes {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => fail(&e),
            }
        }
        Command::Validate { config } => match experiment::validate(&config) {
            Ok(c) => {
                println!("{}", serde_json::to_string_pretty(&c).expect("config serializes"));
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
    }
}
