//! Distances and estimators for comparing samples with each other and with
//! reference densities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{fill_uniform_sphere, invert_cumulative_hazard};
use crate::stationary::GridDensity;

/// Exact W1 between two empirical distributions on the line.
///
/// Equal sizes use the mean absolute difference of order statistics; unequal
/// sizes integrate `|F_x - F_y|` over the merged support.
pub fn wasserstein1_1d(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        let n = a.len() as f64;
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
        prev = next;
    }
    Ok(total)
}

/// Average of 1-D W1 over `n_proj` uniform projection directions.
/// In one dimension this is exactly [`wasserstein1_1d`].
pub fn sliced_wasserstein1<P, R>(xs: &[P], ys: &[P], n_proj: usize, rng: &mut R) -> Result<f64>
where
    P: AsRef<[f64]>,
    R: Rng + ?Sized,
{
    let dim = cloud_dim(xs)?;
    if cloud_dim(ys)? != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: cloud_dim(ys)?,
        });
    }
    if dim == 1 {
        let a: Vec<f64> = xs.iter().map(|p| p.as_ref()[0]).collect();
        let b: Vec<f64> = ys.iter().map(|p| p.as_ref()[0]).collect();
        return wasserstein1_1d(&a, &b);
    }
    if n_proj == 0 {
        return Err(Error::InvalidConfig("need at least one projection".into()));
    }
    let mut dir = vec![0.0; dim];
    let mut total = 0.0;
    let project = |cloud: &[P], dir: &[f64]| -> Vec<f64> {
        cloud
            .iter()
            .map(|p| p.as_ref().iter().zip(dir).map(|(x, w)| x * w).sum())
            .collect()
    };
    for _ in 0..n_proj {
        fill_uniform_sphere(rng, &mut dir);
        total += wasserstein1_1d(&project(xs, &dir), &project(ys, &dir))?;
    }
    Ok(total / n_proj as f64)
}

fn cloud_dim<P: AsRef<[f64]>>(cloud: &[P]) -> Result<usize> {
    let first = cloud.first().ok_or(Error::EmptySample)?.as_ref().len();
    if let Some(bad) = cloud.iter().find(|p| p.as_ref().len() != first) {
        return Err(Error::DimensionMismatch {
            expected: first,
            found: bad.as_ref().len(),
        });
    }
    Ok(first)
}

/// One-sample Kolmogorov-Smirnov statistic `sup |F_n - F|`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    Ok(s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max))
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// `½ Σ |empirical frequency - reference mass|` over the reference's bins.
pub fn histogram_tv<P: AsRef<[f64]>>(samples: &[P], reference: &GridDensity) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let counts = reference.histogram(samples)?;
    let n = samples.len() as f64;
    let tv = 0.5
        * counts
            .iter()
            .zip(reference.masses())
            .map(|(&c, &m)| (c as f64 / n - m).abs())
            .sum::<f64>();
    Ok(tv.clamp(0.0, 1.0))
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptySample);
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() == 1 {
            return Ok(Self { mean, std_err: 0.0 });
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        Ok(Self {
            mean,
            std_err: (var / n).sqrt(),
        })
    }
}

/// A nonnegative step function: `values[i]` on `[breaks[i-1], breaks[i])`,
/// with `breaks[-1] = 0` and the last value extending to infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseRate {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl PiecewiseRate {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breaks.len() + 1 {
            return Err(Error::InvalidConfig("need exactly one more value than breaks".into()));
        }
        if breaks.first().is_some_and(|&b| b <= 0.0) || breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("breaks must be positive and increasing".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidConfig("rates must be finite and nonnegative".into()));
        }
        Ok(Self { breaks, values })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![value])
    }

    pub fn rate(&self, r: f64) -> f64 {
        self.values[self.breaks.partition_point(|&b| b <= r)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Constants of the two-rate Wasserstein bound `W1 <= M / (m1 m2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaConstants {
    /// `sup |f2 - f1|`.
    pub m: f64,
    /// `inf f1`.
    pub m1: f64,
    /// `inf f2`.
    pub m2: f64,
}

impl LemmaConstants {
    /// Sharpest constants for a pair on a shared grid.
    pub fn tightest(f1: &PiecewiseRate, f2: &PiecewiseRate) -> Result<Self> {
        shared_grid(f1, f2)?;
        let m = f1
            .values
            .iter()
            .zip(&f2.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Ok(Self {
            m,
            m1: f1.min(),
            m2: f2.min(),
        })
    }

    pub fn bound(&self) -> f64 {
        self.m / (self.m1 * self.m2)
    }
}

fn shared_grid(f1: &PiecewiseRate, f2: &PiecewiseRate) -> Result<()> {
    if f1.breaks != f2.breaks {
        return Err(Error::BinMismatch("rate pair must share one grid of breaks".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub measured: f64,
    pub std_err: f64,
    pub bound: f64,
    pub passed: bool,
}

/// Measures W1 between the first-arrival laws with intensities `f1` and `f2`
/// and checks it against `M / (m1 m2)` with a 3-standard-error allowance.
///
/// Both laws are sampled by inverse CDF from one shared uniform per draw
/// (the quantile coupling, which is optimal on the line), so the mean
/// absolute difference estimates W1 directly.
pub fn lemma_wasserstein_bound_check<R: Rng + ?Sized>(
    f1: &PiecewiseRate,
    f2: &PiecewiseRate,
    constants: LemmaConstants,
    n: usize,
    rng: &mut R,
) -> Result<LemmaCheck> {
    shared_grid(f1, f2)?;
    let LemmaConstants { m, m1, m2 } = constants;
    if !(m1 > 0.0 && m2 > 0.0) {
        return Err(Error::InvalidConfig("rate floors m1 and m2 must be positive".into()));
    }
    let tight = LemmaConstants::tightest(f1, f2)?;
    if tight.m > m || tight.m1 < m1 || tight.m2 < m2 {
        return Err(Error::InvalidConfig(format!(
            "lemma preconditions fail on the grid: sup|f2-f1| = {}, inf f1 = {}, inf f2 = {}",
            tight.m, tight.m1, tight.m2
        )));
    }
    let tol = 1e-9;
    let mut diffs = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let a = invert_cumulative_hazard(|r| Ok(f1.rate(r)), u, tight.m1, tol)?;
        let b = invert_cumulative_hazard(|r| Ok(f2.rate(r)), u, tight.m2, tol)?;
        diffs.push((a - b).abs());
    }
    let est = MeanEstimate::from_samples(&diffs)?;
    let bound = constants.bound();
    Ok(LemmaCheck {
        measured: est.mean,
        std_err: est.std_err,
        bound,
        passed: est.mean <= bound + 3.0 * est.std_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TorusDomain;
    use crate::sampler::RngStream;
    use proptest::prelude::*;

    #[test]
    fn w1_examples() {
        let xs = [0.3, -1.0, 2.0];
        assert_eq!(wasserstein1_1d(&xs, &xs).unwrap(), 0.0);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 1.5).collect();
        assert!((wasserstein1_1d(&xs, &shifted).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(wasserstein1_1d(&[0.0, 1.0], &[0.0, 3.0]).unwrap(), 1.0);
        assert!(wasserstein1_1d(&[], &[1.0]).is_err());
    }

    #[test]
    fn w1_unequal_sizes_matches_replication() {
        let xs = [0.0, 1.0, 5.0];
        let ys = [2.0, 3.0];
        // Replicate to a common size 6 and use order statistics.
        let x6: Vec<f64> = xs.iter().flat_map(|&x| [x, x]).collect();
        let y6: Vec<f64> = ys.iter().flat_map(|&y| [y, y, y]).collect();
        let exact = wasserstein1_1d(&x6, &y6).unwrap();
        assert!((wasserstein1_1d(&xs, &ys).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn sliced_examples() {
        let mut rng = RngStream::new(0);
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 * 0.1, (i * i % 7) as f64]).collect();
        assert_eq!(sliced_wasserstein1(&x, &x, 32, &mut rng).unwrap(), 0.0);
        let mut perm = x.clone();
        perm.reverse();
        assert_eq!(sliced_wasserstein1(&x, &perm, 32, &mut rng).unwrap(), 0.0);

        let line: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64).sin()]).collect();
        let other: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64).cos()]).collect();
        let flat_a: Vec<f64> = line.iter().map(|p| p[0]).collect();
        let flat_b: Vec<f64> = other.iter().map(|p| p[0]).collect();
        assert_eq!(
            sliced_wasserstein1(&line, &other, 5, &mut rng).unwrap(),
            wasserstein1_1d(&flat_a, &flat_b).unwrap()
        );
        assert!(sliced_wasserstein1(&line, &x, 5, &mut rng).is_err());
    }

    #[test]
    fn ks_statistics() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
        assert_eq!(ks_two_sample(&xs, &xs).unwrap(), 0.0);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 2.0).collect();
        assert_eq!(ks_two_sample(&xs, &shifted).unwrap(), 1.0);
    }

    fn uniform_grid() -> GridDensity {
        GridDensity::uniform(TorusDomain::new(vec![1.0]).unwrap(), vec![64]).unwrap()
    }

    #[test]
    fn tv_examples() {
        let grid = uniform_grid();
        let lumped = vec![vec![0.001]; 100];
        let tv = histogram_tv(&lumped, &grid).unwrap();
        assert!((tv - (1.0 - 1.0 / 64.0)).abs() < 1e-12);
        let exact: Vec<Vec<f64>> = (0..64).map(|i| vec![(i as f64 + 0.5) / 64.0]).collect();
        assert!(histogram_tv(&exact, &grid).unwrap() < 1e-12);
        assert!(histogram_tv(&[vec![1.5]], &grid).is_err());
        assert!(histogram_tv(&[vec![0.5, 0.5]], &grid).is_err());
    }

    #[test]
    fn lemma_constant_rates_are_tight() {
        let f1 = PiecewiseRate::constant(1.0).unwrap();
        let f2 = PiecewiseRate::constant(2.0).unwrap();
        let c = LemmaConstants::tightest(&f1, &f2).unwrap();
        assert_eq!(c.bound(), 0.5);
        let mut rng = RngStream::new(3);
        let check = lemma_wasserstein_bound_check(&f1, &f2, c, 20_000, &mut rng).unwrap();
        assert!((check.measured - 0.5).abs() < 4.0 * check.std_err);
        assert!(check.passed);
        let same = lemma_wasserstein_bound_check(&f1, &f1, LemmaConstants::tightest(&f1, &f1).unwrap(), 100, &mut rng)
            .unwrap();
        assert_eq!(same.measured, 0.0);
    }

    #[test]
    fn lemma_rejects_false_constants() {
        let f1 = PiecewiseRate::new(vec![1.0], vec![1.0, 3.0]).unwrap();
        let f2 = PiecewiseRate::new(vec![1.0], vec![2.0, 2.0]).unwrap();
        let mut rng = RngStream::new(0);
        let wrong = LemmaConstants { m: 0.5, m1: 1.0, m2: 2.0 };
        assert!(lemma_wasserstein_bound_check(&f1, &f2, wrong, 10, &mut rng).is_err());
        let g = PiecewiseRate::new(vec![2.0], vec![2.0, 2.0]).unwrap();
        assert!(LemmaConstants::tightest(&f1, &g).is_err());
    }

    proptest! {
        #[test]
        fn w1_is_a_metric(
            a in prop::collection::vec(-10f64..10.0, 12),
            b in prop::collection::vec(-10f64..10.0, 12),
            c in prop::collection::vec(-10f64..10.0, 12),
        ) {
            let ab = wasserstein1_1d(&a, &b).unwrap();
            let ba = wasserstein1_1d(&b, &a).unwrap();
            let bc = wasserstein1_1d(&b, &c).unwrap();
            let ac = wasserstein1_1d(&a, &c).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ac <= ab + bc + 1e-9);
            prop_assert!(ab >= 0.0);
        }

        #[test]
        fn tv_is_a_probability(xs in prop::collection::vec(0f64..1.0, 1..200)) {
            let grid = uniform_grid();
            let samples: Vec<Vec<f64>> = xs.into_iter().map(|x| vec![x]).collect();
            let tv = histogram_tv(&samples, &grid).unwrap();
            prop_assert!((0.0..=1.0).contains(&tv));
        }
    }
}
