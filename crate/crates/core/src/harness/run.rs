use std::path::Path;

use rayon::prelude::*;

use super::config::{Experiment, ExperimentConfig, ObjectiveSpec, Protocol, SamplerKind};
use super::table::{num, Table};
use super::{RecordSet, SUMMARY_FILE};
use crate::baselines::{run_sgd_recorded, SgdConfig};
use crate::bps::{run_bps_recorded, Bps, BpsConfig};
use crate::domain::TorusDomain;
use crate::error::{Error, Result};
use crate::metrics::{histogram_tv, ks_two_sample, sliced_wasserstein1, MeanEstimate};
use crate::objective::{empirical_risk, LinRegData, LinRegSynthetic};
use crate::poisson_sgd::{run_poisson_sgd_recorded, PoissonSgd, PoissonSgdConfig, StepOutcome};
use crate::record::{RecordHeader, RunRecord, StepEntry};
use crate::sampler::{trial_seed, uniform_sphere, RngStream, RNG_ALGORITHM};
use crate::stationary::{
    mean_abs_coordinate, normalize_on_grid, sample_stationary_oracle, StationaryDensity,
};

/// Stream of a trial's seed reserved for drawing its initial state.
const INIT_STREAM: u64 = 1;
/// Streams of the experiment seed reserved for analysis.
const ORACLE_STREAM: u64 = u64::MAX - 1;
const PROJECTION_STREAM: u64 = u64::MAX;

const STATIONARITY_LABEL: &str = "checkpoint";
const LONG_CHAIN_LABEL: &str = "long_chain";

fn initial_velocity(given: Option<&Vec<f64>>, dim: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    match given {
        Some(v) => Ok(v.clone()),
        None => uniform_sphere(dim, rng),
    }
}

fn keyed(records: Vec<RunRecord>) -> RecordSet {
    records
        .into_iter()
        .map(|r| ((r.header.label.clone(), r.header.trial), r))
        .collect()
}

fn final_point(rec: &RunRecord, fallback: &[f64]) -> Vec<f64> {
    rec.final_theta().unwrap_or(fallback).to_vec()
}

fn get<'a>(records: &'a RecordSet, label: &str, trial: u64) -> Result<&'a RunRecord> {
    records
        .get(&(label.to_string(), trial))
        .ok_or_else(|| Error::MalformedRun(format!("missing record {label} #{trial}")))
}

pub(super) fn execute(cfg: &ExperimentConfig) -> Result<RecordSet> {
    let obj = cfg.build_objective()?;
    let obj = obj.as_ref();
    let trials = cfg.trials as u64;
    let stride = cfg.record_stride;
    let dim = obj.dim();
    match &cfg.experiment {
        Experiment::Escape {
            poisson_sgd,
            sgd,
            sgld,
            steps,
            initial_point,
            initial_velocity: v0,
            ..
        } => {
            let per_trial = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let seed = trial_seed(cfg.seed, t);
                    let mut rng = RngStream::new(seed).split(INIT_STREAM);
                    let v = initial_velocity(v0.as_ref(), dim, &mut rng)?;
                    let mut psgd_cfg =
                        PoissonSgdConfig::new(poisson_sgd.beta, poisson_sgd.epsilon, *steps, initial_point.clone(), v, seed);
                    psgd_cfg.batch_size = poisson_sgd.batch_size;
                    let mut out = vec![run_poisson_sgd_recorded(obj, &psgd_cfg, stride, "poisson_sgd", t)?];
                    for (label, params) in [("sgd", sgd), ("sgld", sgld)] {
                        if let Some(p) = params {
                            let c = SgdConfig {
                                learning_rate: p.learning_rate,
                                temperature: p.temperature,
                                steps: *steps,
                                batch_size: p.batch_size,
                                initial_point: initial_point.clone(),
                                seed,
                            };
                            out.push(run_sgd_recorded(obj, &c, stride, label, t)?);
                        }
                    }
                    Ok(out)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(keyed(per_trial.into_iter().flatten().collect()))
        }
        Experiment::Stationarity {
            sampler,
            beta,
            epsilon,
            c_b,
            batch_size,
            checkpoints,
            initial_point,
            initial_velocity: v0,
            protocol,
            ..
        } => {
            let k_max = *checkpoints.last().expect("validated");
            let chain = |c: u64, keep: &dyn Fn(u64) -> bool| -> Result<Vec<StepEntry>> {
                let seed = trial_seed(cfg.seed, c);
                let mut rng = RngStream::new(seed).split(INIT_STREAM);
                let v = initial_velocity(v0.as_ref(), dim, &mut rng)?;
                let mut kept = Vec::new();
                let mut push = |k: u64, theta: &[f64], v: &[f64], o: &StepOutcome| {
                    if keep(k) {
                        kept.push(StepEntry {
                            k,
                            theta: theta.to_vec(),
                            velocity: Some(v.to_vec()),
                            eta: o.eta,
                            grad_norm: o.grad_norm,
                            event: Some(o.event),
                            reflect_prob: o.reflect_prob,
                            chain: Some(c),
                            ..Default::default()
                        });
                    }
                };
                match sampler {
                    SamplerKind::PoissonSgd => {
                        let mut pc =
                            PoissonSgdConfig::new(*beta, *epsilon, k_max, initial_point.clone(), v, seed);
                        pc.batch_size = *batch_size;
                        let mut s = PoissonSgd::new(obj, &pc)?;
                        for k in 1..=k_max {
                            let o = s.step()?;
                            push(k, &s.state().theta, &s.state().velocity, &o);
                        }
                    }
                    SamplerKind::Bps => {
                        let bc =
                            BpsConfig::coupled(obj, *beta, *epsilon, *c_b, k_max, initial_point.clone(), v, seed);
                        let mut s = Bps::new(obj, &bc)?;
                        for k in 1..=k_max {
                            let o = s.step()?;
                            push(k, &s.state().theta, &s.state().velocity, &o);
                        }
                    }
                }
                Ok(kept)
            };
            let algorithm = match sampler {
                SamplerKind::PoissonSgd => "poisson_sgd",
                SamplerKind::Bps => "bps",
            };
            let header = |label: &str, trial: u64, steps: u64, stride: u64| -> Result<RecordHeader> {
                Ok(RecordHeader {
                    algorithm: algorithm.into(),
                    label: label.into(),
                    trial,
                    objective: obj.name().into(),
                    dim,
                    steps,
                    stride,
                    rng: RNG_ALGORITHM.into(),
                    seed: cfg.seed,
                    config: serde_json::to_value(&cfg.experiment)?,
                })
            };
            match protocol {
                Protocol::ManyChains => {
                    let per_chain = (0..trials)
                        .into_par_iter()
                        .map(|c| chain(c, &|k| checkpoints.contains(&k)))
                        .collect::<Result<Vec<_>>>()?;
                    let mut out = Vec::new();
                    for (j, &k) in checkpoints.iter().enumerate() {
                        let mut rec = RunRecord::new(header(STATIONARITY_LABEL, j as u64, k, k)?);
                        rec.steps = per_chain.iter().map(|entries| entries[j].clone()).collect();
                        out.push(rec);
                    }
                    Ok(keyed(out))
                }
                Protocol::LongChain { burn_in, thin } => {
                    let thin = (*thin).max(1);
                    let entries = chain(0, &|k| k >= *burn_in && (k - burn_in) % thin == 0)?;
                    let mut rec = RunRecord::new(header(LONG_CHAIN_LABEL, 0, k_max, thin)?);
                    rec.steps = entries;
                    Ok(keyed(vec![rec]))
                }
            }
        }
        Experiment::BetaSweep {
            betas,
            epsilon,
            steps,
            batch_size,
            initial_point,
            ..
        } => {
            let jobs: Vec<(usize, u64)> =
                (0..betas.len()).flat_map(|i| (0..trials).map(move |t| (i, t))).collect();
            let recs = jobs
                .into_par_iter()
                .map(|(i, t)| {
                    let seed = trial_seed(cfg.seed, t);
                    let mut rng = RngStream::new(seed).split(INIT_STREAM);
                    let x0 = match initial_point {
                        Some(p) => p.clone(),
                        None => obj.domain().sample_uniform(&mut rng).into_vec(),
                    };
                    let v = uniform_sphere(dim, &mut rng)?;
                    let mut pc = PoissonSgdConfig::new(betas[i], *epsilon, *steps, x0, v, seed);
                    pc.batch_size = *batch_size;
                    run_poisson_sgd_recorded(obj, &pc, stride, &beta_label(i), t)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(keyed(recs))
        }
        Experiment::Coupling {
            beta,
            epsilon,
            steps,
            c_b,
            batch_size,
            initial_point,
            initial_velocity: v,
            ..
        } => {
            let per_trial = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut pc = PoissonSgdConfig::new(
                        *beta,
                        *epsilon,
                        *steps,
                        initial_point.clone(),
                        v.clone(),
                        trial_seed(cfg.seed, 2 * t),
                    );
                    pc.batch_size = *batch_size;
                    let bc = BpsConfig::coupled(
                        obj,
                        *beta,
                        *epsilon,
                        *c_b,
                        *steps,
                        initial_point.clone(),
                        v.clone(),
                        trial_seed(cfg.seed, 2 * t + 1),
                    );
                    Ok(vec![
                        run_poisson_sgd_recorded(obj, &pc, stride, "poisson_sgd", t)?,
                        run_bps_recorded(obj, &bc, stride, "bps", t)?,
                    ])
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(keyed(per_trial.into_iter().flatten().collect()))
        }
        Experiment::Generalization {
            sizes,
            poisson_sgd,
            steps,
            ..
        } => {
            let (d, noise) = linreg_shape(&cfg.objective)?;
            let jobs: Vec<(usize, u64)> =
                sizes.iter().flat_map(|&n| (0..trials).map(move |t| (n, t))).collect();
            let recs = jobs
                .into_par_iter()
                .map(|(n, t)| {
                    let seed = trial_seed(cfg.seed, t);
                    let train = linreg(cfg.domain.as_ref(), n, d, noise, seed)?;
                    let mut rng = RngStream::new(seed).split(INIT_STREAM);
                    let v = uniform_sphere(d, &mut rng)?;
                    let mut pc =
                        PoissonSgdConfig::new(poisson_sgd.beta, poisson_sgd.epsilon, *steps, vec![0.0; d], v, seed);
                    pc.batch_size = poisson_sgd.batch_size.map(|m| m.min(n));
                    run_poisson_sgd_recorded(&train, &pc, stride, &size_label(n), t)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(keyed(recs))
        }
        Experiment::Baseline {
            sgd,
            steps,
            initial_point,
        } => {
            let label = if sgd.temperature > 0.0 { "sgld" } else { "sgd" };
            let recs = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let c = SgdConfig {
                        learning_rate: sgd.learning_rate,
                        temperature: sgd.temperature,
                        steps: *steps,
                        batch_size: sgd.batch_size,
                        initial_point: initial_point.clone(),
                        seed: trial_seed(cfg.seed, t),
                    };
                    run_sgd_recorded(obj, &c, stride, label, t)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(keyed(recs))
        }
    }
}

fn beta_label(i: usize) -> String {
    format!("beta{i:03}")
}

fn size_label(n: usize) -> String {
    format!("n{n:07}")
}

fn linreg_shape(spec: &ObjectiveSpec) -> Result<(usize, f64)> {
    match spec {
        ObjectiveSpec::LinregSynthetic { d, noise, .. } => Ok((*d, *noise)),
        _ => Err(Error::InvalidConfig("generalization runs on linreg_synthetic".into())),
    }
}

fn linreg(domain: Option<&TorusDomain>, n: usize, d: usize, noise: f64, seed: u64) -> Result<LinRegSynthetic> {
    let domain = domain.cloned().unwrap_or_else(|| LinRegSynthetic::default_domain(d));
    LinRegSynthetic::new(domain, LinRegData::generate(n, d, noise, seed)?)
}

/// Builds the summary table (and any extra files) from records, writing
/// everything under `dir`.
pub fn analyze_records(cfg: &ExperimentConfig, records: &RecordSet, dir: &Path) -> Result<Table> {
    let obj = cfg.build_objective()?;
    let obj = obj.as_ref();
    let trials = cfg.trials as u64;
    let table = match &cfg.experiment {
        Experiment::Escape {
            sgd,
            sgld,
            initial_point,
            global_min,
            local_min,
            radius,
            ..
        } => {
            let domain = obj.domain();
            let mut table = Table::new(&[
                "algorithm",
                "trials",
                "fraction_global",
                "fraction_within_radius",
                "mean_final_risk",
                "std_err_final_risk",
            ]);
            let mut labels = vec!["poisson_sgd"];
            labels.extend(sgd.iter().map(|_| "sgd"));
            labels.extend(sgld.iter().map(|_| "sgld"));
            let mut traj = Vec::new();
            for label in labels {
                let (mut global, mut near, mut risks) = (0usize, 0usize, Vec::new());
                for t in 0..trials {
                    let rec = get(records, label, t)?;
                    let end = final_point(rec, initial_point);
                    let to_global = domain.distance(&end, global_min)?;
                    if to_global < domain.distance(&end, local_min)? {
                        global += 1;
                    }
                    if to_global <= *radius {
                        near += 1;
                    }
                    risks.push(empirical_risk(obj, &end)?);
                    for s in &rec.steps {
                        let coords: Vec<String> = s.theta.iter().map(|x| num(*x)).collect();
                        traj.push(format!("{label},{t},{},{}", s.k, coords.join(",")));
                    }
                }
                let est = MeanEstimate::from_samples(&risks)?;
                let n = trials as f64;
                table.push(vec![
                    label.into(),
                    trials.to_string(),
                    num(global as f64 / n),
                    num(near as f64 / n),
                    num(est.mean),
                    num(est.std_err),
                ]);
            }
            let header: Vec<String> = (0..obj.dim()).map(|i| format!("theta_{i}")).collect();
            let mut csv = format!("algorithm,trial,k,{}\n", header.join(","));
            for line in traj {
                csv.push_str(&line);
                csv.push('\n');
            }
            std::fs::write(dir.join("trajectories.csv"), csv)?;
            std::fs::write(dir.join("plot_trajectories.py"), PLOT_SCRIPT)?;
            table
        }
        Experiment::Stationarity {
            sampler,
            beta,
            epsilon,
            c_b,
            checkpoints,
            protocol,
            bins,
            oracle_samples,
            projections,
            ..
        } => {
            let density = StationaryDensity::new(obj, *beta, *epsilon)?;
            let grid = normalize_on_grid(&density, *bins)?;
            grid.save_csv(&dir.join("density.csv"))?;
            let halved = density.gradient_weight(0.5 * mean_abs_coordinate(obj.dim())?);
            let halved_grid = normalize_on_grid(&halved, *bins)?;
            let mut rng = RngStream::with_stream(cfg.seed, ORACLE_STREAM);
            let oracle: Vec<Vec<f64>> = sample_stationary_oracle(&density, &grid, *oracle_samples, &mut rng)?
                .into_iter()
                .map(|p| p.into_vec())
                .collect();
            let long = matches!(protocol, Protocol::LongChain { .. });
            let mut table = Table::new(&[
                "checkpoint",
                "samples",
                "tv",
                "tv_halved_gradient_weight",
                "sliced_w1",
                "ks_max",
                "long_chain_caveat",
            ]);
            let _ = (sampler, c_b);
            for (j, &k) in checkpoints.iter().enumerate() {
                let samples: Vec<Vec<f64>> = if long {
                    get(records, LONG_CHAIN_LABEL, 0)?
                        .steps
                        .iter()
                        .filter(|s| s.k <= k)
                        .map(|s| s.theta.clone())
                        .collect()
                } else {
                    get(records, STATIONARITY_LABEL, j as u64)?
                        .steps
                        .iter()
                        .map(|s| s.theta.clone())
                        .collect()
                };
                if samples.is_empty() {
                    table.push(vec![k.to_string(), "0".into(), String::new(), String::new(), String::new(), String::new(), long.to_string()]);
                    continue;
                }
                let tv = histogram_tv(&samples, &grid)?;
                let tv_half = histogram_tv(&samples, &halved_grid)?;
                let mut proj = RngStream::with_stream(cfg.seed, PROJECTION_STREAM);
                let sw = sliced_wasserstein1(&samples, &oracle, *projections, &mut proj)?;
                let mut ks: f64 = 0.0;
                for i in 0..obj.dim() {
                    let a: Vec<f64> = samples.iter().map(|p| p[i]).collect();
                    let b: Vec<f64> = oracle.iter().map(|p| p[i]).collect();
                    ks = ks.max(ks_two_sample(&a, &b)?);
                }
                table.push(vec![
                    k.to_string(),
                    samples.len().to_string(),
                    num(tv),
                    num(tv_half),
                    num(sw),
                    num(ks),
                    long.to_string(),
                ]);
            }
            table
        }
        Experiment::BetaSweep {
            betas,
            epsilon,
            initial_point,
            bins,
            ..
        } => {
            let mut table = Table::new(&["beta", "trials", "mean_loss", "std_err", "stationary_mean_loss"]);
            for (i, &beta) in betas.iter().enumerate() {
                let losses = (0..trials)
                    .map(|t| {
                        let rec = get(records, &beta_label(i), t)?;
                        let fallback = initial_point.clone().unwrap_or_default();
                        empirical_risk(obj, &final_point(rec, &fallback))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let est = MeanEstimate::from_samples(&losses)?;
                let reference = if obj.dim() <= 3 {
                    let grid = normalize_on_grid(&StationaryDensity::new(obj, beta, *epsilon)?, *bins)?;
                    num(grid.expectation(|x| empirical_risk(obj, x).unwrap_or(f64::NAN)))
                } else {
                    String::new()
                };
                table.push(vec![num(beta), trials.to_string(), num(est.mean), num(est.std_err), reference]);
            }
            table
        }
        Experiment::Coupling {
            epsilon,
            steps,
            initial_point,
            projections,
            ..
        } => {
            let ends = |label: &str| -> Result<Vec<Vec<f64>>> {
                (0..trials).map(|t| Ok(final_point(get(records, label, t)?, initial_point))).collect()
            };
            let (a, b) = (ends("poisson_sgd")?, ends("bps")?);
            let mut rng = RngStream::new(cfg.seed).split(u64::MAX);
            let distance = sliced_wasserstein1(&a, &b, *projections, &mut rng)?;
            let bound = 4.0 * (obj.dim() as f64).sqrt() * *steps as f64 * epsilon;
            let mut table = Table::new(&["trials", "steps", "epsilon", "sliced_w1", "bound"]);
            table.push(vec![trials.to_string(), steps.to_string(), num(*epsilon), num(distance), num(bound)]);
            table
        }
        Experiment::Generalization { sizes, n_test, .. } => {
            let (d, noise) = linreg_shape(&cfg.objective)?;
            let mut table = Table::new(&[
                "n",
                "trials",
                "train_risk",
                "test_risk",
                "gap",
                "gap_std_err",
            ]);
            for &n in sizes {
                let rows = (0..trials)
                    .into_par_iter()
                    .map(|t| {
                        let seed = trial_seed(cfg.seed, t);
                        let train = linreg(cfg.domain.as_ref(), n, d, noise, seed)?;
                        let test = train.held_out(*n_test)?;
                        let end = final_point(get(records, &size_label(n), t)?, &vec![0.0; d]);
                        Ok((empirical_risk(&train, &end)?, empirical_risk(&test, &end)?))
                    })
                    .collect::<Result<Vec<(f64, f64)>>>()?;
                let train: Vec<f64> = rows.iter().map(|r| r.0).collect();
                let test: Vec<f64> = rows.iter().map(|r| r.1).collect();
                let gaps: Vec<f64> = rows.iter().map(|r| r.1 - r.0).collect();
                let gap = MeanEstimate::from_samples(&gaps)?;
                table.push(vec![
                    n.to_string(),
                    trials.to_string(),
                    num(MeanEstimate::from_samples(&train)?.mean),
                    num(MeanEstimate::from_samples(&test)?.mean),
                    num(gap.mean),
                    num(gap.std_err),
                ]);
            }
            table
        }
        Experiment::Baseline {
            sgd, initial_point, ..
        } => {
            let label = if sgd.temperature > 0.0 { "sgld" } else { "sgd" };
            let mut table = Table::new(&["trial", "final_risk"]);
            for t in 0..trials {
                let end = final_point(get(records, label, t)?, initial_point);
                table.push(vec![t.to_string(), num(empirical_risk(obj, &end)?)]);
            }
            table
        }
    };
    table.save(&dir.join(SUMMARY_FILE))?;
    Ok(table)
}

const PLOT_SCRIPT: &str = r#"# Plots escape trajectories from trajectories.csv (needs pandas and matplotlib).
import sys

import matplotlib.pyplot as plt
import pandas as pd

df = pd.read_csv(sys.argv[1] if len(sys.argv) > 1 else "trajectories.csv")
fig, ax = plt.subplots(figsize=(6, 5))
for (alg, trial), g in df.groupby(["algorithm", "trial"]):
    ax.plot(g["theta_0"], g.get("theta_1", 0 * g["theta_0"]), lw=0.6, alpha=0.6,
            color="tab:blue" if alg == "poisson_sgd" else "tab:orange")
ax.plot([-3], [0], "go")
ax.plot([6], [0], "r*", ms=12)
ax.set_xlabel("theta_0")
ax.set_ylabel("theta_1")
fig.savefig("trajectories.png", dpi=150)
"#;
