//! Config-driven experiments: run trials, persist their records, and
//! regenerate summary tables from the persisted records.
//!
//! A run directory holds `manifest.json`, `config.json`, `records/*.ndjson`
//! and `summary.csv`, plus per-experiment extras (trajectory CSV and plot
//! script for escape runs, the reference density grid for stationarity runs).

mod config;
mod run;
mod table;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{
    list_objectives, Experiment, ExperimentConfig, ObjectiveInfo, ObjectiveSpec, PoissonSgdParams,
    Protocol, SamplerKind, SgdParams,
};
pub use run::analyze_records;
pub use table::Table;

use crate::error::{Error, Result};
use crate::record::RunRecord;
use crate::sampler::{trial_seed, RNG_ALGORITHM};

/// Worker-count override for the trial pool.
pub const WORKERS_ENV: &str = "PSGD_WORKERS";

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const RECORDS_DIR: &str = "records";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
    pub trial_seeds: Vec<u64>,
    pub version: String,
    pub rng: String,
}

impl Manifest {
    pub fn for_config(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            name: cfg.name.clone(),
            kind: cfg.kind().into(),
            config_hash: cfg.hash()?,
            seed: cfg.seed,
            trial_seeds: (0..cfg.trials as u64).map(|t| trial_seed(cfg.seed, t)).collect(),
            version: env!("CARGO_PKG_VERSION").into(),
            rng: RNG_ALGORITHM.into(),
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_FILE))?)?)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub summary: Table,
    pub records: usize,
}

/// Records keyed by `(label, trial)`.
pub type RecordSet = BTreeMap<(String, u64), RunRecord>;

/// Thread pool sized by [`WORKERS_ENV`], or rayon's default.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))
}

/// Output directory: explicit, else the config's, else `runs/<name>`.
pub fn output_dir(cfg: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name))
}

fn record_file(label: &str, trial: u64) -> String {
    format!("{label}-{trial:05}.ndjson")
}

/// Creates `dir` and claims it for `cfg`. An existing manifest with a
/// different config hash is never overwritten.
fn claim(dir: &Path, cfg: &ExperimentConfig) -> Result<Manifest> {
    let manifest = Manifest::for_config(cfg)?;
    let path = dir.join(MANIFEST_FILE);
    if path.exists() {
        let existing = Manifest::load(dir)?;
        if existing.config_hash != manifest.config_hash {
            return Err(Error::ManifestMismatch {
                path,
                existing: existing.config_hash,
                expected: manifest.config_hash,
            });
        }
    }
    std::fs::create_dir_all(dir.join(RECORDS_DIR))?;
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
    std::fs::write(dir.join(CONFIG_FILE), serde_json::to_vec_pretty(cfg)?)?;
    Ok(manifest)
}

/// Runs every trial of `cfg`, writes records and summaries under `dir`.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    let manifest = claim(dir, cfg)?;
    let pool = worker_pool()?;
    let records = pool.install(|| run::execute(cfg))?;
    let records_dir = dir.join(RECORDS_DIR);
    for old in std::fs::read_dir(&records_dir)? {
        let old = old?.path();
        if old.extension().is_some_and(|e| e == "ndjson") {
            std::fs::remove_file(old)?;
        }
    }
    for ((label, trial), rec) in &records {
        rec.save(&records_dir.join(record_file(label, *trial)))?;
    }
    let summary = pool.install(|| analyze_records(cfg, &records, dir))?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        manifest,
        summary,
        records: records.len(),
    })
}

/// Rebuilds the summary files of a finished run from its records.
pub fn analyze(dir: &Path) -> Result<Table> {
    let manifest = Manifest::load(dir)?;
    let cfg: ExperimentConfig = serde_json::from_slice(&std::fs::read(dir.join(CONFIG_FILE))?)?;
    let hash = cfg.hash()?;
    if hash != manifest.config_hash {
        return Err(Error::ManifestMismatch {
            path: dir.join(MANIFEST_FILE),
            existing: manifest.config_hash,
            expected: hash,
        });
    }
    let records = load_records(dir)?;
    worker_pool()?.install(|| analyze_records(&cfg, &records, dir))
}

pub fn load_records(dir: &Path) -> Result<RecordSet> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir.join(RECORDS_DIR))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "ndjson"));
    paths.sort();
    let mut out = RecordSet::new();
    for p in paths {
        let rec = RunRecord::load(&p)?;
        out.insert((rec.header.label.clone(), rec.header.trial), rec);
    }
    if out.is_empty() {
        return Err(Error::MalformedRun(format!("no records under {}", dir.display())));
    }
    Ok(out)
}
