//! Runs an experiment config through the harness, then regenerates its
//! summary from the persisted records alone.
//!
//! Usage: `cargo run --release --example run_config [config.json] [out-dir]`

use std::path::PathBuf;

use psgd::harness::{analyze, output_dir, run_experiment, ExperimentConfig};

fn main() -> psgd::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/generalization.json"));
    let cfg = ExperimentConfig::load(&config)?;
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join(output_dir(&cfg, None)));

    let outcome = run_experiment(&cfg, &dir)?;
    println!("{} records in {}\n{}", outcome.records, dir.display(), outcome.summary);
    let again = analyze(&dir)?;
    assert_eq!(again, outcome.summary);
    println!("summary regenerated from records: identical");
    Ok(())
}
