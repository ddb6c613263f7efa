//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Experiment criteria run the configs shipped in `configs/` through the
//! harness, so their parameters are fixed before this file ever runs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use psgd::checks::{self, CheckReport};
use psgd::harness::{run_experiment, Experiment, ExperimentConfig, SamplerKind, Table, RECORDS_DIR};
use psgd::Result;

struct Outcome {
    passed: bool,
    detail: String,
}

fn from_reports(reports: Vec<CheckReport>) -> Outcome {
    Outcome {
        passed: reports.iter().all(|r| r.passed),
        detail: reports.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("; "),
    }
}

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.json"));
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

struct Runs {
    root: tempfile::TempDir,
}

impl Runs {
    fn dir(&self, cfg: &ExperimentConfig, tag: &str) -> PathBuf {
        self.root.path().join(format!("{}-{tag}", cfg.name))
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Table> {
        Ok(run_experiment(cfg, &self.dir(cfg, "first"))?.summary)
    }
}

fn pm(x: f64, se: f64) -> String {
    format!("{x:.4} ± {se:.4}")
}

/// Pooled two-sigma band for a difference of two independent means.
fn two_se(a: f64, b: f64) -> f64 {
    2.0 * a.hypot(b)
}

fn velocity_norm() -> Result<Outcome> {
    Ok(from_reports(checks::velocity_norm(1_000_000)?))
}

fn reflection() -> Result<Outcome> {
    Ok(from_reports(vec![checks::reflection_algebra(10_000, 1)?]))
}

fn learning_rate_law() -> Result<Outcome> {
    Ok(from_reports(checks::learning_rate_law(100_000, 2)?))
}

fn stationarity(runs: &Runs) -> Result<Outcome> {
    let mut passed = true;
    let mut detail = Vec::new();
    for name in ["stationarity_bowl", "stationarity_double_well"] {
        let cfg = config(name);
        let t = runs.run(&cfg)?;
        let tv = t.f64_column("tv")?;
        let halved = t.f64_column("tv_halved_gradient_weight")?;
        let ks = t.f64_column("checkpoint")?;
        let last = *tv.last().unwrap();
        let decreasing = tv.windows(2).all(|w| w[1] < w[0]);
        passed &= last < 0.05 && decreasing;
        let trace: Vec<String> = ks.iter().zip(&tv).map(|(k, v)| format!("K={k}: {v:.4}")).collect();
        detail.push(format!(
            "{name} ({} chains) TV {} [halved gradient weight at last K: {:.4}]",
            cfg.trials,
            trace.join(", "),
            halved.last().unwrap()
        ));
    }
    Ok(Outcome { passed, detail: detail.join("; ") })
}

fn poisson_sgd_stationarity(runs: &Runs) -> Result<Outcome> {
    let cfg = config("stationarity_poisson_sgd");
    let diameter = cfg.build_objective()?.domain().diameter();
    let t = runs.run(&cfg)?;
    let w1 = *t.f64_column("sliced_w1")?.last().unwrap();

    let mut bps = cfg.clone();
    bps.name = "stationarity_matched_bps".into();
    if let Experiment::Stationarity { sampler, .. } = &mut bps.experiment {
        *sampler = SamplerKind::Bps;
    }
    let bps_w1 = *runs.run(&bps)?.f64_column("sliced_w1")?.last().unwrap();
    Ok(Outcome {
        passed: w1 < 0.1 * diameter,
        detail: format!(
            "Poisson SGD W1 {w1:.4} vs 0.1·diam = {:.4} ({} chains); matched BPS W1 {bps_w1:.4}",
            0.1 * diameter,
            cfg.trials
        ),
    })
}

fn sphere_constants() -> Result<Outcome> {
    Ok(from_reports(checks::sphere_constants(1_000_000, 3)?))
}

fn wasserstein_lemma() -> Result<Outcome> {
    Ok(from_reports(checks::wasserstein_lemma(100, 10_000, 4)?))
}

fn escape(runs: &Runs) -> Result<Outcome> {
    let cfg = config("escape");
    let t = runs.run(&cfg)?;
    let algs = t.text_column("algorithm")?;
    let frac = t.f64_column("fraction_global")?;
    let near = t.f64_column("fraction_within_radius")?;
    let of = |name: &str| algs.iter().position(|a| *a == name).map(|i| (frac[i], near[i]));
    let (psgd, psgd_near) = of("poisson_sgd").unwrap();
    let (sgd, _) = of("sgd").unwrap();
    let n = cfg.trials as f64;
    let mut detail = format!(
        "global basin: poisson_sgd {:.0}/{n} (within 1.5 of (6,0): {:.0}), sgd {:.0}/{n}",
        psgd * n,
        psgd_near * n,
        sgd * n
    );
    if let Some((sgld, _)) = of("sgld") {
        detail.push_str(&format!(", sgld {:.0}/{n}", sgld * n));
    }
    Ok(Outcome { passed: sgd == 0.0 && psgd >= 0.8, detail })
}

fn beta_sweep(runs: &Runs) -> Result<Outcome> {
    let cfg = config("beta_sweep");
    let t = runs.run(&cfg)?;
    let betas = t.f64_column("beta")?;
    let mean = t.f64_column("mean_loss")?;
    let se = t.f64_column("std_err")?;
    let reference = t.f64_column("stationary_mean_loss")?;

    let zero = betas.iter().position(|&b| b == 0.0).unwrap();
    let limit_ok = (mean[zero] - reference[zero]).abs() <= 2.0 * se[zero];

    let ladder: Vec<usize> = [1e-3, 1e-2, 1e-1]
        .iter()
        .map(|b| betas.iter().position(|x| x == b).unwrap())
        .collect();
    let mut inversions = 0;
    let mut inversions_ok = true;
    for w in ladder.windows(2) {
        let (a, b) = (w[0], w[1]);
        if mean[b] >= mean[a] {
            inversions += 1;
            inversions_ok &= mean[b] - mean[a] <= two_se(se[a], se[b]);
        }
    }
    let rows: Vec<String> = betas.iter().zip(mean.iter().zip(&se)).map(|(b, (m, s))| format!("β={b}: {}", pm(*m, *s))).collect();
    Ok(Outcome {
        passed: limit_ok && inversions <= 1 && inversions_ok,
        detail: format!(
            "{}; β=0 grid integral {:.1}; inversions {inversions}",
            rows.join(", "),
            reference[zero]
        ),
    })
}

fn generalization(runs: &Runs) -> Result<Outcome> {
    let cfg = config("generalization");
    let t = runs.run(&cfg)?;
    let n = t.f64_column("n")?;
    let gap = t.f64_column("gap")?;
    let se = t.f64_column("gap_std_err")?;
    let mut passed = true;
    for i in 1..gap.len() {
        passed &= gap[i] <= gap[i - 1] + two_se(se[i - 1], se[i]);
    }
    let rows: Vec<String> = n.iter().zip(gap.iter().zip(&se)).map(|(n, (g, s))| format!("n={n}: {}", pm(*g, *s))).collect();
    Ok(Outcome { passed, detail: format!("gap {} over {} seeds", rows.join(", "), cfg.trials) })
}

fn record_bytes(dir: &Path) -> std::io::Result<Vec<(PathBuf, Vec<u8>)>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir.join(RECORDS_DIR))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.sort();
    files.into_iter().map(|p| Ok((p.clone(), std::fs::read(&p)?))).collect()
}

/// Reruns every config run above, plus the two kinds no other criterion
/// exercises, and compares records byte for byte.
fn determinism(runs: &Runs) -> Result<Outcome> {
    for name in ["coupling", "sgd_baseline"] {
        runs.run(&config(name))?;
    }
    let mut names: Vec<String> = std::fs::read_dir(runs.root.path())?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<std::io::Result<_>>()?;
    names.sort();
    let mut passed = true;
    let mut checked = Vec::new();
    for first in names.iter().filter(|n| n.ends_with("-first")) {
        let first = runs.root.path().join(first);
        let cfg = ExperimentConfig::load(&first.join(psgd::harness::CONFIG_FILE))?;
        let second = runs.dir(&cfg, "second");
        run_experiment(&cfg, &second)?;
        let (a, b) = (record_bytes(&first)?, record_bytes(&second)?);
        let same = a.len() == b.len()
            && !a.is_empty()
            && a.iter().zip(&b).all(|((pa, ba), (pb, bb))| pa.file_name() == pb.file_name() && ba == bb);
        passed &= same;
        checked.push(format!("{} ({} files){}", cfg.name, a.len(), if same { "" } else { " DIFFERS" }));
        std::fs::remove_dir_all(&second)?;
    }
    Ok(Outcome { passed, detail: format!("identical records on rerun: {}", checked.join(", ")) })
}

fn main() -> ExitCode {
    let runs = Runs { root: tempfile::tempdir().expect("temporary directory") };
    type Criterion<'a> = (u32, &'a str, Duration, Box<dyn Fn() -> Result<Outcome> + 'a>);
    let min = |m: u64| Duration::from_secs(60 * m);
    let criteria: Vec<Criterion> = vec![
        (1, "velocity norm", min(2), Box::new(velocity_norm)),
        (2, "reflection algebra", min(1), Box::new(reflection)),
        (3, "learning-rate law", min(2), Box::new(learning_rate_law)),
        (4, "BPS stationarity", min(30), Box::new(|| stationarity(&runs))),
        (5, "Poisson SGD stationarity", min(30), Box::new(|| poisson_sgd_stationarity(&runs))),
        (6, "sphere constants", min(1), Box::new(sphere_constants)),
        (7, "Wasserstein lemma", min(2), Box::new(wasserstein_lemma)),
        (8, "escape", min(10), Box::new(|| escape(&runs))),
        (9, "global-convergence direction", min(15), Box::new(|| beta_sweep(&runs))),
        (10, "generalization direction", min(15), Box::new(|| generalization(&runs))),
        (11, "determinism", min(60), Box::new(|| determinism(&runs))),
    ];

    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let (passed, detail) = match outcome {
            Ok(o) => (o.passed && elapsed <= budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !passed as u32;
        println!(
            "{} criterion {id:2} {name} [{:.1}s of {}s]: {detail}",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("{} of 11 criteria passed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
