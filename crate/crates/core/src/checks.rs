//! The invariant suite behind `psgd verify`: velocity normalization,
//! reflection algebra, the learning-rate law, the sphere constant, and the
//! two-rate Wasserstein bound. Each check takes its sample budget so tests can
//! run it at full size.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bps::{Bps, BpsConfig};
use crate::domain::TorusDomain;
use crate::error::Result;
use crate::linalg::{dot, norm};
use crate::metrics::{
    ks_statistic, lemma_wasserstein_bound_check, wasserstein1_1d, LemmaConstants, MeanEstimate,
    PiecewiseRate,
};
use crate::objective::{well_slope, DoubleWell2d, Objective};
use crate::poisson_sgd::{reflect, PoissonSgd, PoissonSgdConfig};
use crate::sampler::{
    fill_uniform_sphere, sample_ray_exponential, sample_ray_exponential_oracle, RayRate, RngStream,
};
use crate::stationary::{cos_plus_expectation, mean_abs_coordinate};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckReport {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// `| |v_k| - 1 |` at every step of Poisson SGD and of BPS on the 2-D double well.
pub fn velocity_norm(steps: u64) -> Result<Vec<CheckReport>> {
    let obj = DoubleWell2d::with_default_domain();
    let init = DoubleWell2d::LOCAL_MIN.to_vec();
    let psgd_cfg = PoissonSgdConfig::new(0.05, 1.0, steps, init.clone(), vec![1.0, 0.0], 1);
    let mut psgd = PoissonSgd::new(&obj, &psgd_cfg)?;
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        psgd.step()?;
        worst = worst.max((norm(&psgd.state().velocity) - 1.0).abs());
    }
    let bps_cfg = BpsConfig::coupled(&obj, 0.05, 1.0, 0.5, steps, init, vec![1.0, 0.0], 2);
    let mut bps = Bps::new(&obj, &bps_cfg)?;
    let mut worst_bps: f64 = 0.0;
    for _ in 0..steps {
        bps.step()?;
        worst_bps = worst_bps.max((norm(&bps.state().velocity) - 1.0).abs());
    }
    Ok(vec![
        CheckReport::new(
            "velocity norm (poisson sgd)",
            worst <= 1e-9,
            format!("max ||v|-1| = {worst:.2e} over {steps} steps"),
        ),
        CheckReport::new(
            "velocity norm (bps)",
            worst_bps <= 1e-9,
            format!("max ||v|-1| = {worst_bps:.2e} over {steps} steps"),
        ),
    ])
}

/// Involution, norm preservation and sign flip of the along-gradient
/// component on random pairs in dimensions 1 to 8.
pub fn reflection_algebra(pairs: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = RngStream::new(seed);
    let (mut inv, mut nrm, mut flip): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..pairs {
        let d = rng.random_range(1..=8);
        let mut v = vec![0.0; d];
        fill_uniform_sphere(&mut rng, &mut v);
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = reflect(&v, &g);
        let rr = reflect(&r, &g);
        inv = inv.max(v.iter().zip(&rr).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        nrm = nrm.max((norm(&r) - norm(&v)).abs());
        flip = flip.max((dot(&r, &g) + dot(&v, &g)).abs());
    }
    let worst = inv.max(nrm).max(flip);
    Ok(CheckReport::new(
        "reflection algebra",
        worst <= 1e-12,
        format!("{pairs} pairs: involution {inv:.1e}, norm {nrm:.1e}, sign flip {flip:.1e}"),
    ))
}

/// A rate field along a fixed ray, for comparing the two first-arrival samplers.
struct RayCase {
    name: &'static str,
    domain: TorusDomain,
    base: Vec<f64>,
    direction: Vec<f64>,
    beta: f64,
    floor: f64,
    bound: f64,
    field: fn(&[f64], &mut [f64]),
}

fn ray_cases() -> Vec<RayCase> {
    let dw = DoubleWell2d::with_default_domain();
    vec![
        RayCase {
            name: "zero",
            domain: TorusDomain::centered(vec![10.0]).expect("valid"),
            base: vec![0.0],
            direction: vec![1.0],
            beta: 1.0,
            floor: 2.0,
            bound: 0.0,
            field: |_, out| out[0] = 0.0,
        },
        RayCase {
            name: "constant",
            domain: TorusDomain::centered(vec![10.0]).expect("valid"),
            base: vec![0.0],
            direction: vec![1.0],
            beta: 0.5,
            floor: 1.0,
            bound: 3.0,
            field: |_, out| out[0] = 3.0,
        },
        RayCase {
            name: "clipped",
            domain: TorusDomain::centered(vec![2.0 * std::f64::consts::PI]).expect("valid"),
            base: vec![-2.0],
            direction: vec![1.0],
            beta: 1.0,
            floor: 0.5,
            bound: 2.0,
            field: |x, out| out[0] = 2.0 * x[0].sin(),
        },
        RayCase {
            name: "linear",
            domain: TorusDomain::centered(vec![10.0]).expect("valid"),
            base: vec![0.0],
            direction: vec![1.0],
            beta: 1.0,
            floor: 0.3,
            bound: 5.0,
            field: |x, out| out[0] = x[0],
        },
        RayCase {
            name: "double-well ray",
            bound: dw.grad_norm_bound(),
            domain: dw.domain().clone(),
            base: vec![-3.0, 0.5],
            direction: vec![0.6, 0.8],
            beta: 0.05,
            floor: 1.0,
            field: |x, out| {
                out[0] = well_slope(x[0]);
                out[1] = 2.0 * x[1];
            },
        },
    ]
}

fn draw_case(case: &RayCase, n: usize, seed: u64, oracle: bool) -> Result<Vec<f64>> {
    let mut rng = RngStream::new(seed);
    let mut rate = RayRate::new(
        &case.domain,
        &case.base,
        &case.direction,
        case.beta,
        case.floor,
        case.bound,
        case.field,
    )?;
    (0..n)
        .map(|_| {
            if oracle {
                sample_ray_exponential_oracle(&mut rate, &mut rng, 1e-9)
            } else {
                sample_ray_exponential(&mut rate, &mut rng)
            }
        })
        .collect()
}

/// KS against Exp(λ) for constant rates, thinning vs inverse-CDF W1 on five
/// rate fields, and `E[eta] <= 1/C` along a Poisson SGD run.
pub fn learning_rate_law(samples: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    let cases = ray_cases();

    let mut worst_ks: f64 = 0.0;
    let mut detail = Vec::new();
    for (case, lambda) in [(&cases[0], 2.0), (&cases[1], 2.5)] {
        let draws = draw_case(case, samples, seed, false)?;
        let ks = ks_statistic(&draws, |t| 1.0 - (-lambda * t).exp())?;
        worst_ks = worst_ks.max(ks);
        detail.push(format!("Exp({lambda}) KS {ks:.4}"));
    }
    out.push(CheckReport::new(
        "learning-rate law: constant rates",
        worst_ks < 0.006,
        format!("{} at n = {samples}", detail.join(", ")),
    ));

    let mut worst_w1: f64 = 0.0;
    let mut detail = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        let thin = draw_case(case, samples, seed + 1 + 2 * i as u64, false)?;
        let inv = draw_case(case, samples, seed + 2 + 2 * i as u64, true)?;
        let w1 = wasserstein1_1d(&thin, &inv)?;
        worst_w1 = worst_w1.max(w1);
        detail.push(format!("{} {w1:.4}", case.name));
    }
    out.push(CheckReport::new(
        "learning-rate law: thinning vs inverse CDF",
        worst_w1 < 1e-2,
        format!("W1 {}", detail.join(", ")),
    ));

    let obj = DoubleWell2d::with_default_domain();
    let epsilon = 1.0;
    let steps = samples as u64;
    let cfg = PoissonSgdConfig::new(0.05, epsilon, steps, vec![-3.0, 0.0], vec![1.0, 0.0], seed);
    let mut stepper = PoissonSgd::new(&obj, &cfg)?;
    let etas = (0..steps).map(|_| stepper.step().map(|o| o.eta)).collect::<Result<Vec<_>>>()?;
    let est = MeanEstimate::from_samples(&etas)?;
    out.push(CheckReport::new(
        "learning-rate law: mean step",
        est.mean <= epsilon + 3.0 * est.std_err,
        format!("mean eta {:.4} ± {:.4} vs 1/C = {epsilon}", est.mean, est.std_err),
    ));
    Ok(out)
}

/// Closed-form `E|v_1|` in low dimensions, and Monte Carlo `E[(cos φ)_+]`
/// against half of it and against `[1/√(2πd), 1/√(2π(d-1))]`.
pub fn sphere_constants(draws: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let pi = std::f64::consts::PI;
    let exact = [(1, 1.0), (2, 2.0 / pi), (3, 0.5)];
    let mut err: f64 = 0.0;
    for (d, want) in exact {
        err = err.max((mean_abs_coordinate(d)? - want).abs());
    }
    let mut out = vec![CheckReport::new(
        "sphere constant closed form",
        err <= 1e-12,
        format!("max error {err:.1e} for d = 1, 2, 3"),
    )];
    let mut rng = RngStream::new(seed);
    let mut passed = true;
    let mut detail = Vec::new();
    for d in 2..=10usize {
        let est = cos_plus_expectation(d, draws, &mut rng)?;
        let half = 0.5 * mean_abs_coordinate(d)?;
        let lo = 1.0 / (2.0 * pi * d as f64).sqrt();
        let hi = 1.0 / (2.0 * pi * (d - 1) as f64).sqrt();
        let z = (est.mean - half) / est.std_err;
        let ok = z.abs() <= 4.0 && (lo..=hi).contains(&est.mean);
        passed &= ok;
        detail.push(format!("d={d} {:.5} (z {z:+.2})", est.mean));
    }
    out.push(CheckReport::new(
        "E[(cos φ)_+] = E|v_1|/2",
        passed,
        detail.join(", "),
    ));
    Ok(out)
}

/// Random step-rate pairs on a shared grid against `M / (m1 m2)`, plus the
/// constant pair 1 and 2 where the bound 1/2 is attained.
pub fn wasserstein_lemma(pairs: usize, draws: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut rng = RngStream::new(seed);
    let breaks: Vec<f64> = (1..=8).map(|i| 0.25 * i as f64).collect();
    let mut failures = 0;
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..pairs {
        let mut values = || (0..=breaks.len()).map(|_| rng.random_range(0.5..3.0)).collect::<Vec<f64>>();
        let f1 = PiecewiseRate::new(breaks.clone(), values())?;
        let f2 = PiecewiseRate::new(breaks.clone(), values())?;
        let c = LemmaConstants::tightest(&f1, &f2)?;
        let check = lemma_wasserstein_bound_check(&f1, &f2, c, draws, &mut rng)?;
        if !check.passed {
            failures += 1;
        }
        worst_ratio = worst_ratio.max(check.measured / check.bound);
    }
    let f1 = PiecewiseRate::constant(1.0)?;
    let f2 = PiecewiseRate::constant(2.0)?;
    let c = LemmaConstants::tightest(&f1, &f2)?;
    let check = lemma_wasserstein_bound_check(&f1, &f2, c, draws.max(100_000), &mut rng)?;
    Ok(vec![
        CheckReport::new(
            "wasserstein lemma: random pairs",
            failures == 0,
            format!("{failures}/{pairs} above bound + 3 SE; max measured/bound {worst_ratio:.3}"),
        ),
        CheckReport::new(
            "wasserstein lemma: rates 1 and 2",
            (check.measured - 0.5).abs() <= 0.01 && c.bound() == 0.5,
            format!("W1 {:.4} ± {:.4}, bound {}", check.measured, check.std_err, c.bound()),
        ),
    ])
}

/// Every check at full size.
pub fn suite() -> Result<Vec<CheckReport>> {
    let mut out = velocity_norm(1_000_000)?;
    out.push(reflection_algebra(10_000, 1)?);
    out.extend(learning_rate_law(100_000, 2)?);
    out.extend(sphere_constants(1_000_000, 3)?);
    out.extend(wasserstein_lemma(100, 10_000, 4)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_budgets_pass() {
        assert!(velocity_norm(2_000).unwrap().iter().all(|r| r.passed));
        assert!(reflection_algebra(500, 0).unwrap().passed);
        let reports = sphere_constants(20_000, 0).unwrap();
        assert!(reports[0].passed);
        let lemma = wasserstein_lemma(5, 2_000, 0).unwrap();
        assert!(lemma[0].passed, "{}", lemma[0]);
    }

    #[test]
    fn report_display() {
        let r = CheckReport::new("x", false, "y".into());
        assert_eq!(r.to_string(), "FAIL x: y");
    }
}
