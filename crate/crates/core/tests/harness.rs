use std::path::{Path, PathBuf};
use std::process::Command;

use psgd::harness::{
    analyze, load_records, run_experiment, Experiment, ExperimentConfig, Manifest, ObjectiveSpec,
    PoissonSgdParams, Protocol, SamplerKind, SgdParams, CONFIG_FILE, RECORDS_DIR, SUMMARY_FILE,
};
use psgd::Error;

fn escape(steps: u64, trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: "escape-small".into(),
        objective: ObjectiveSpec::DoubleWell2d,
        domain: None,
        seed: 7,
        trials,
        record_stride: 50,
        output_dir: None,
        experiment: Experiment::Escape {
            poisson_sgd: PoissonSgdParams { beta: 0.05, epsilon: 1.0, batch_size: None },
            sgd: Some(SgdParams { learning_rate: 1e-3, temperature: 0.0, batch_size: None }),
            sgld: Some(SgdParams { learning_rate: 1e-3, temperature: 5.0, batch_size: None }),
            steps,
            initial_point: vec![-3.1, 0.2],
            initial_velocity: None,
            global_min: vec![6.0, 0.0],
            local_min: vec![-3.0, 0.0],
            radius: 1.5,
        },
    }
}

fn stationarity(protocol: Protocol) -> ExperimentConfig {
    ExperimentConfig {
        name: "stationarity-small".into(),
        objective: ObjectiveSpec::QuadraticBowl { dim: 1, centers: None },
        domain: None,
        seed: 4,
        trials: 200,
        record_stride: 1,
        output_dir: None,
        experiment: Experiment::Stationarity {
            sampler: SamplerKind::Bps,
            beta: 1.0,
            epsilon: 0.1,
            c_b: 0.0,
            batch_size: None,
            checkpoints: vec![10, 100],
            initial_point: vec![3.0],
            initial_velocity: Some(vec![1.0]),
            protocol,
            bins: 64,
            oracle_samples: 500,
            projections: 16,
        },
    }
}

fn small_configs() -> Vec<ExperimentConfig> {
    let mut out = vec![escape(300, 3), stationarity(Protocol::ManyChains)];
    out.push(ExperimentConfig {
        name: "sweep-small".into(),
        objective: ObjectiveSpec::DoubleWell1d,
        domain: None,
        seed: 11,
        trials: 3,
        record_stride: 10,
        output_dir: None,
        experiment: Experiment::BetaSweep {
            betas: vec![0.0, 0.1],
            epsilon: 1.0,
            steps: 200,
            batch_size: None,
            initial_point: None,
            bins: 64,
        },
    });
    out.push(ExperimentConfig {
        name: "coupling-small".into(),
        objective: ObjectiveSpec::DoubleWell1d,
        domain: None,
        seed: 13,
        trials: 20,
        record_stride: 5,
        output_dir: None,
        experiment: Experiment::Coupling {
            beta: 0.01,
            epsilon: 0.01,
            steps: 20,
            c_b: 0.0,
            batch_size: None,
            initial_point: vec![-3.0],
            initial_velocity: vec![1.0],
            projections: 4,
        },
    });
    out.push(ExperimentConfig {
        name: "generalization-small".into(),
        objective: ObjectiveSpec::LinregSynthetic { n: 16, d: 3, noise: 0.5, data_seed: None, data_file: None },
        domain: None,
        seed: 3,
        trials: 3,
        record_stride: 100,
        output_dir: None,
        experiment: Experiment::Generalization {
            sizes: vec![16, 64],
            n_test: 100,
            poisson_sgd: PoissonSgdParams { beta: 50.0, epsilon: 0.01, batch_size: Some(8) },
            steps: 500,
        },
    });
    out.push(ExperimentConfig {
        name: "baseline-small".into(),
        objective: ObjectiveSpec::QuadraticBowl { dim: 2, centers: Some(vec![vec![1.0, -1.0], vec![-1.0, 2.0]]) },
        domain: None,
        seed: 1,
        trials: 2,
        record_stride: 10,
        output_dir: None,
        experiment: Experiment::Baseline {
            sgd: SgdParams { learning_rate: 0.05, temperature: 0.1, batch_size: Some(1) },
            steps: 100,
            initial_point: vec![0.0, 0.0],
        },
    });
    out
}

fn record_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir.join(RECORDS_DIR))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().into(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn every_kind_replays_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    for cfg in small_configs() {
        let a = tmp.path().join(format!("{}-a", cfg.name));
        let b = tmp.path().join(format!("{}-b", cfg.name));
        run_experiment(&cfg, &a).unwrap();
        run_experiment(&cfg, &b).unwrap();
        let (ra, rb) = (record_bytes(&a), record_bytes(&b));
        assert!(!ra.is_empty(), "{}", cfg.name);
        assert_eq!(ra, rb, "{}", cfg.name);
        assert_eq!(
            std::fs::read(a.join(SUMMARY_FILE)).unwrap(),
            std::fs::read(b.join(SUMMARY_FILE)).unwrap(),
            "{}",
            cfg.name
        );
    }
}

#[test]
fn summaries_regenerate_from_records_alone() {
    let tmp = tempfile::tempdir().unwrap();
    for cfg in small_configs() {
        let dir = tmp.path().join(&cfg.name);
        let outcome = run_experiment(&cfg, &dir).unwrap();
        let written = std::fs::read(dir.join(SUMMARY_FILE)).unwrap();
        std::fs::remove_file(dir.join(SUMMARY_FILE)).unwrap();
        assert_eq!(analyze(&dir).unwrap(), outcome.summary, "{}", cfg.name);
        assert_eq!(std::fs::read(dir.join(SUMMARY_FILE)).unwrap(), written, "{}", cfg.name);
    }
}

#[test]
fn manifest_with_other_hash_is_not_overwritten() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let cfg = escape(20, 1);
    run_experiment(&cfg, &dir).unwrap();
    let before = std::fs::read(dir.join("manifest.json")).unwrap();

    let mut other = cfg.clone();
    other.seed += 1;
    match run_experiment(&other, &dir) {
        Err(Error::ManifestMismatch { existing, expected, .. }) => {
            assert_eq!(existing, cfg.hash().unwrap());
            assert_eq!(expected, other.hash().unwrap());
        }
        r => panic!("expected a manifest mismatch, got {r:?}"),
    }
    assert_eq!(std::fs::read(dir.join("manifest.json")).unwrap(), before);
    run_experiment(&cfg, &dir).unwrap();
}

#[test]
fn manifest_lists_trial_seeds_and_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = escape(10, 4);
    let outcome = run_experiment(&cfg, tmp.path()).unwrap();
    let m = Manifest::load(tmp.path()).unwrap();
    assert_eq!(m, outcome.manifest);
    assert_eq!(m.trial_seeds.len(), 4);
    assert_eq!(m.config_hash, cfg.hash().unwrap());
    assert_eq!(m.version, env!("CARGO_PKG_VERSION"));
    let saved = ExperimentConfig::load(&tmp.path().join(CONFIG_FILE)).unwrap();
    assert_eq!(saved, cfg);
}

#[test]
fn tampered_config_is_detected_by_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = escape(10, 1);
    run_experiment(&cfg, tmp.path()).unwrap();
    let mut other = cfg.clone();
    other.trials = 2;
    std::fs::write(tmp.path().join(CONFIG_FILE), serde_json::to_vec(&other).unwrap()).unwrap();
    assert!(matches!(analyze(tmp.path()), Err(Error::ManifestMismatch { .. })));
}

#[test]
fn zero_steps_leave_every_endpoint_at_the_start() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = escape(0, 3);
    let outcome = run_experiment(&cfg, tmp.path()).unwrap();
    for rec in load_records(tmp.path()).unwrap().values() {
        assert!(rec.steps.is_empty());
    }
    for row in 0..3 {
        assert_eq!(outcome.summary.rows[row][2], "0");
    }
    let start_loss = psgd::objective::empirical_risk(
        &psgd::objective::DoubleWell2d::with_default_domain(),
        &[-3.1, 0.2],
    )
    .unwrap();
    let risks = outcome.summary.f64_column("mean_final_risk").unwrap();
    assert!(risks.iter().all(|&r| (r - start_loss).abs() < 1e-9));
}

#[test]
fn plain_sgd_near_the_local_minimum_never_leaves_it() {
    let tmp = tempfile::tempdir().unwrap();
    let outcome = run_experiment(&escape(5_000, 5), tmp.path()).unwrap();
    let algs = outcome.summary.text_column("algorithm").unwrap();
    let frac = outcome.summary.f64_column("fraction_global").unwrap();
    let sgd = algs.iter().position(|a| *a == "sgd").unwrap();
    assert_eq!(frac[sgd], 0.0);
    assert!(tmp.path().join("trajectories.csv").exists());
    assert!(tmp.path().join("plot_trajectories.py").exists());
}

#[test]
fn long_chain_protocol_is_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = stationarity(Protocol::LongChain { burn_in: 20, thin: 2 });
    let outcome = run_experiment(&cfg, tmp.path()).unwrap();
    let recs = load_records(tmp.path()).unwrap();
    assert_eq!(recs.len(), 1);
    let rec = recs.values().next().unwrap();
    assert!(rec.steps.iter().all(|s| s.k >= 20 && s.k % 2 == 0));
    assert!(outcome.summary.text_column("long_chain_caveat").unwrap().iter().all(|c| *c == "true"));
    assert!(tmp.path().join("density.csv").exists());
}

#[test]
fn single_seed_sweep_repeats_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_configs().remove(2);
    cfg.experiment = match cfg.experiment {
        Experiment::BetaSweep { epsilon, steps, batch_size, initial_point, bins, .. } => Experiment::BetaSweep {
            betas: vec![0.05, 0.05],
            epsilon,
            steps,
            batch_size,
            initial_point,
            bins,
        },
        _ => unreachable!(),
    };
    let t = run_experiment(&cfg, tmp.path()).unwrap().summary;
    assert_eq!(t.rows[0], t.rows[1]);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_psgd"))
}

#[test]
fn cli_run_with_seed_override_and_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("escape.json");
    std::fs::write(&config, serde_json::to_vec_pretty(&escape(50, 2)).unwrap()).unwrap();
    let out = tmp.path().join("out");
    let status = cli()
        .args(["run", config.to_str().unwrap(), "--seed", "99", "--out", out.to_str().unwrap()])
        .env("PSGD_WORKERS", "2")
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(Manifest::load(&out).unwrap().seed, 99);

    let analyzed = cli().args(["analyze", out.to_str().unwrap()]).output().unwrap();
    assert!(analyzed.status.success());
    assert!(String::from_utf8(analyzed.stdout).unwrap().contains("poisson_sgd"));
}

#[test]
fn cli_rejects_bad_worker_count_and_lists_objectives() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("escape.json");
    std::fs::write(&config, serde_json::to_vec(&escape(5, 1)).unwrap()).unwrap();
    let bad = cli()
        .args(["run", config.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()])
        .env("PSGD_WORKERS", "many")
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8(bad.stderr).unwrap().contains("PSGD_WORKERS"));

    let list = cli().arg("list-objectives").output().unwrap();
    let text = String::from_utf8(list.stdout).unwrap();
    for name in ["double_well_2d", "double_well_1d", "quadratic_bowl", "linreg_synthetic"] {
        assert!(text.contains(name));
    }
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 6);
}
