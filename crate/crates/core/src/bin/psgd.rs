use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use psgd::harness::{self, ExperimentConfig};

#[derive(Parser)]
#[command(name = "psgd", version, about = "Poisson SGD experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its run directory.
    Run {
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the config's, else runs/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate summary tables from the records in a run directory.
    Analyze { run_dir: PathBuf },
    /// Print the built-in objectives.
    ListObjectives,
    /// Run the invariant checks; exits non-zero if any fails.
    Verify,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> psgd::Result<ExitCode> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let dir = harness::output_dir(&cfg, out.as_deref());
            let outcome = harness::run_experiment(&cfg, &dir)?;
            println!("{} records -> {}", outcome.records, outcome.dir.display());
            print!("{}", outcome.summary);
        }
        Command::Analyze { run_dir } => print!("{}", harness::analyze(&run_dir)?),
        Command::ListObjectives => {
            for o in harness::list_objectives() {
                println!("{:<18} dim {:<4} {}", o.name, o.dim, o.description);
            }
        }
        Command::Verify => {
            let reports = psgd::checks::suite()?;
            for r in &reports {
                println!("{r}");
            }
            if reports.iter().any(|r| !r.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
