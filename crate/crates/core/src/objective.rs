//! Losses, empirical and mini-batch risks, and the built-in test problems.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::TorusDomain;
use crate::error::{check_dim, Error, Result};
use crate::linalg::norm;
use crate::sampler::RngStream;

/// A nonnegative per-sample loss `l(z_i; theta)` over a fixed dataset, together
/// with a bound on every per-sample gradient norm over its domain.
///
/// Gradients are taken from the local (unwrapped) formula at canonical points
/// of [`Objective::domain`].
pub trait Objective: Send + Sync {
    fn name(&self) -> &str;

    fn domain(&self) -> &TorusDomain;

    fn dim(&self) -> usize {
        self.domain().dim()
    }

    /// Number of samples `n`. Dataset-free objectives report 1.
    fn n_samples(&self) -> usize;

    fn sample_loss(&self, i: usize, theta: &[f64]) -> f64;

    /// Overwrites `out` with the gradient of sample `i`'s loss.
    fn sample_gradient(&self, i: usize, theta: &[f64], out: &mut [f64]);

    /// `sup |∇l(z; theta)|` over samples and the domain.
    fn grad_norm_bound(&self) -> f64;

    fn metadata(&self) -> ObjectiveMetadata {
        ObjectiveMetadata::default()
    }
}

/// Regularity constants some analyses need. Absent when not known in closed form.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveMetadata {
    /// Lipschitz constant of every per-sample gradient.
    pub lipschitz_c1: Option<f64>,
    /// `sup_z |∇l(z; 0)|`.
    pub grad_at_origin_b: Option<f64>,
    /// `sup_z |l(z; 0)|`.
    pub loss_at_origin_a: Option<f64>,
}

/// Sorted, distinct sample indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MiniBatch(Vec<usize>);

impl MiniBatch {
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.is_empty() || indices.len() > n {
            return Err(Error::InvalidBatchSize {
                m: indices.len(),
                n,
            });
        }
        indices.sort_unstable();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, n });
        }
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("mini-batch indices must be distinct".into()));
        }
        Ok(Self(indices))
    }

    pub fn full(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Uniform size-`m` subset of `0..n`, drawn without replacement.
/// The full batch consumes no randomness.
pub fn sample_minibatch<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<MiniBatch> {
    if m == 0 || m > n {
        return Err(Error::InvalidBatchSize { m, n });
    }
    if m == n {
        return Ok(MiniBatch::full(n));
    }
    let mut idx = rand::seq::index::sample(rng, n, m).into_vec();
    idx.sort_unstable();
    Ok(MiniBatch(idx))
}

pub fn empirical_risk<O: Objective + ?Sized>(obj: &O, theta: &[f64]) -> Result<f64> {
    check_dim(obj.dim(), theta.len())?;
    let n = obj.n_samples();
    Ok((0..n).map(|i| obj.sample_loss(i, theta)).sum::<f64>() / n as f64)
}

pub fn minibatch_risk<O: Objective + ?Sized>(
    obj: &O,
    batch: &MiniBatch,
    theta: &[f64],
) -> Result<f64> {
    check_dim(obj.dim(), theta.len())?;
    check_batch(obj, batch)?;
    let m = batch.len() as f64;
    Ok(batch.indices().iter().map(|&i| obj.sample_loss(i, theta)).sum::<f64>() / m)
}

pub fn minibatch_risk_grad<O: Objective + ?Sized>(
    obj: &O,
    batch: &MiniBatch,
    theta: &[f64],
) -> Result<Vec<f64>> {
    check_dim(obj.dim(), theta.len())?;
    check_batch(obj, batch)?;
    let mut out = vec![0.0; obj.dim()];
    let mut scratch = vec![0.0; obj.dim()];
    batch_gradient_into(obj, batch.indices(), theta, &mut out, &mut scratch);
    Ok(out)
}

pub fn full_gradient<O: Objective + ?Sized>(obj: &O, theta: &[f64]) -> Result<Vec<f64>> {
    minibatch_risk_grad(obj, &MiniBatch::full(obj.n_samples()), theta)
}

fn check_batch<O: Objective + ?Sized>(obj: &O, batch: &MiniBatch) -> Result<()> {
    let n = obj.n_samples();
    match batch.indices().last() {
        Some(&i) if i >= n => Err(Error::IndexOutOfRange { index: i, n }),
        _ => Ok(()),
    }
}

/// Mean gradient over `indices`, summed in index order. No validation.
pub(crate) fn batch_gradient_into<O: Objective + ?Sized>(
    obj: &O,
    indices: &[usize],
    theta: &[f64],
    out: &mut [f64],
    scratch: &mut [f64],
) {
    if let [only] = indices {
        obj.sample_gradient(*only, theta, out);
        return;
    }
    out.iter_mut().for_each(|x| *x = 0.0);
    for &i in indices {
        obj.sample_gradient(i, theta, scratch);
        out.iter_mut().zip(scratch.iter()).for_each(|(o, g)| *o += g);
    }
    let m = indices.len() as f64;
    out.iter_mut().for_each(|x| *x /= m);
}

/// Finite-difference check of the empirical-risk gradient.
#[derive(Debug, Clone, Copy)]
pub struct GradientCheck {
    pub max_abs_error: f64,
    /// Per coordinate `|fd - g| / max(1, |fd|, |g|)`, maximized.
    pub max_rel_error: f64,
}

/// Central differences with step `h * max(1, |theta_i|)` against the analytic
/// full-batch gradient.
pub fn check_gradient<O: Objective + ?Sized>(
    obj: &O,
    theta: &[f64],
    h: f64,
) -> Result<GradientCheck> {
    let g = full_gradient(obj, theta)?;
    let n = obj.n_samples();
    let risk = |x: &[f64]| (0..n).map(|i| obj.sample_loss(i, x)).sum::<f64>() / n as f64;
    let mut x = theta.to_vec();
    let mut max_abs: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    for i in 0..theta.len() {
        let step = h * theta[i].abs().max(1.0);
        x[i] = theta[i] + step;
        let up = risk(&x);
        x[i] = theta[i] - step;
        let down = risk(&x);
        x[i] = theta[i];
        let fd = (up - down) / (2.0 * step);
        let err = (fd - g[i]).abs();
        max_abs = max_abs.max(err);
        max_rel = max_rel.max(err / 1f64.max(fd.abs()).max(g[i].abs()));
    }
    Ok(GradientCheck {
        max_abs_error: max_abs,
        max_rel_error: max_rel,
    })
}

// ---------------------------------------------------------------------------
// Double well: f(x) = x^4 - 4x^3 - 36x^2 (+ y^2), shifted by 864 so min f = 0.
// f'(x) = 4x(x - 6)(x + 3): local min at -3 (f = 729), max at 0 (f = 864),
// global min at 6 (f = 0).

const WELL_SHIFT: f64 = 864.0;

fn well(x: f64) -> f64 {
    let x2 = x * x;
    x2 * x2 - 4.0 * x2 * x - 36.0 * x2 + WELL_SHIFT
}

pub(crate) fn well_slope(x: f64) -> f64 {
    4.0 * x * x * x - 12.0 * x * x - 72.0 * x
}

fn well_curvature(x: f64) -> f64 {
    12.0 * x * x - 24.0 * x - 72.0
}

/// `max |f'|` on `[lo, hi]`: endpoints or the roots `1 ± √7` of f''.
fn well_slope_abs_max(lo: f64, hi: f64) -> f64 {
    let s7 = 7f64.sqrt();
    [lo, hi, 1.0 - s7, 1.0 + s7]
        .into_iter()
        .filter(|x| (lo..=hi).contains(x))
        .map(|x| well_slope(x).abs())
        .fold(0.0, f64::max)
}

/// `max |f''|` on `[lo, hi]`: f'' is a parabola with vertex at 1.
fn well_curvature_abs_max(lo: f64, hi: f64) -> f64 {
    [lo, hi, 1.0]
        .into_iter()
        .filter(|x| (lo..=hi).contains(x))
        .map(|x| well_curvature(x).abs())
        .fold(0.0, f64::max)
}

/// `f(x, y) = x⁴ - 4x³ - 36x² + y² + 864` (dataset-free).
#[derive(Debug, Clone)]
pub struct DoubleWell2d {
    domain: TorusDomain,
    bound: f64,
    c1: f64,
}

impl DoubleWell2d {
    pub const LOCAL_MIN: [f64; 2] = [-3.0, 0.0];
    pub const GLOBAL_MIN: [f64; 2] = [6.0, 0.0];

    pub fn new(domain: TorusDomain) -> Result<Self> {
        check_dim(2, domain.dim())?;
        let (lo, hi) = (domain.lower().to_vec(), domain.upper());
        let fx = well_slope_abs_max(lo[0], hi[0]);
        let gy = 2.0 * lo[1].abs().max(hi[1].abs());
        let bound = fx.hypot(gy);
        let c1 = well_curvature_abs_max(lo[0], hi[0]).max(2.0);
        Ok(Self { domain, bound, c1 })
    }

    /// `[-7, 11) × [-10, 10)`. Both wells sit well inside; the loss on the
    /// x-seam exceeds 2800, so trajectories at useful temperatures never reach it.
    pub fn default_domain() -> TorusDomain {
        TorusDomain::with_lower(vec![-7.0, -10.0], vec![18.0, 20.0]).expect("valid domain")
    }

    pub fn with_default_domain() -> Self {
        Self::new(Self::default_domain()).expect("valid domain")
    }
}

impl Objective for DoubleWell2d {
    fn name(&self) -> &str {
        "double_well_2d"
    }

    fn domain(&self) -> &TorusDomain {
        &self.domain
    }

    fn n_samples(&self) -> usize {
        1
    }

    fn sample_loss(&self, _i: usize, theta: &[f64]) -> f64 {
        well(theta[0]) + theta[1] * theta[1]
    }

    fn sample_gradient(&self, _i: usize, theta: &[f64], out: &mut [f64]) {
        out[0] = well_slope(theta[0]);
        out[1] = 2.0 * theta[1];
    }

    fn grad_norm_bound(&self) -> f64 {
        self.bound
    }

    fn metadata(&self) -> ObjectiveMetadata {
        ObjectiveMetadata {
            lipschitz_c1: Some(self.c1),
            grad_at_origin_b: Some(0.0),
            loss_at_origin_a: Some(WELL_SHIFT),
        }
    }
}

/// One-dimensional slice `f(x) = x⁴ - 4x³ - 36x² + 864`.
#[derive(Debug, Clone)]
pub struct DoubleWell1d {
    domain: TorusDomain,
    bound: f64,
    c1: f64,
}

impl DoubleWell1d {
    pub const LOCAL_MIN: f64 = -3.0;
    pub const GLOBAL_MIN: f64 = 6.0;

    pub fn new(domain: TorusDomain) -> Result<Self> {
        check_dim(1, domain.dim())?;
        let (lo, hi) = (domain.lower()[0], domain.upper()[0]);
        Ok(Self {
            bound: well_slope_abs_max(lo, hi),
            c1: well_curvature_abs_max(lo, hi),
            domain,
        })
    }

    /// `[-6, 9.1)`: f(-6) = 1728 and f(9.1) ≈ 1725.6, so the loss is nearly
    /// continuous across the seam.
    pub fn default_domain() -> TorusDomain {
        TorusDomain::with_lower(vec![-6.0], vec![15.1]).expect("valid domain")
    }

    pub fn with_default_domain() -> Self {
        Self::new(Self::default_domain()).expect("valid domain")
    }
}

impl Objective for DoubleWell1d {
    fn name(&self) -> &str {
        "double_well_1d"
    }

    fn domain(&self) -> &TorusDomain {
        &self.domain
    }

    fn n_samples(&self) -> usize {
        1
    }

    fn sample_loss(&self, _i: usize, theta: &[f64]) -> f64 {
        well(theta[0])
    }

    fn sample_gradient(&self, _i: usize, theta: &[f64], out: &mut [f64]) {
        out[0] = well_slope(theta[0]);
    }

    fn grad_norm_bound(&self) -> f64 {
        self.bound
    }

    fn metadata(&self) -> ObjectiveMetadata {
        ObjectiveMetadata {
            lipschitz_c1: Some(self.c1),
            grad_at_origin_b: Some(0.0),
            loss_at_origin_a: Some(WELL_SHIFT),
        }
    }
}

/// `l(z; theta) = |theta - z|² / 2` over a set of centers `z_i`.
#[derive(Debug, Clone)]
pub struct QuadraticBowl {
    domain: TorusDomain,
    centers: Vec<Vec<f64>>,
    bound: f64,
}

impl QuadraticBowl {
    pub fn new(domain: TorusDomain, centers: Vec<Vec<f64>>) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidConfig("quadratic bowl needs at least one center".into()));
        }
        for c in &centers {
            check_dim(domain.dim(), c.len())?;
        }
        let upper = domain.upper();
        let bound = centers
            .iter()
            .map(|z| {
                z.iter()
                    .zip(domain.lower().iter().zip(&upper))
                    .map(|(z, (lo, hi))| {
                        let far = (lo - z).abs().max((hi - z).abs());
                        far * far
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        Ok(Self {
            domain,
            centers,
            bound,
        })
    }

    /// Single center at the origin on a centered box of the given side.
    pub fn centered(dim: usize, side: f64) -> Result<Self> {
        Self::new(TorusDomain::centered(vec![side; dim])?, vec![vec![0.0; dim]])
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }
}

impl Objective for QuadraticBowl {
    fn name(&self) -> &str {
        "quadratic_bowl"
    }

    fn domain(&self) -> &TorusDomain {
        &self.domain
    }

    fn n_samples(&self) -> usize {
        self.centers.len()
    }

    fn sample_loss(&self, i: usize, theta: &[f64]) -> f64 {
        0.5 * theta
            .iter()
            .zip(&self.centers[i])
            .map(|(t, z)| (t - z) * (t - z))
            .sum::<f64>()
    }

    fn sample_gradient(&self, i: usize, theta: &[f64], out: &mut [f64]) {
        for ((o, t), z) in out.iter_mut().zip(theta).zip(&self.centers[i]) {
            *o = t - z;
        }
    }

    fn grad_norm_bound(&self) -> f64 {
        self.bound
    }

    fn metadata(&self) -> ObjectiveMetadata {
        let b = self.centers.iter().map(|z| norm(z)).fold(0.0, f64::max);
        ObjectiveMetadata {
            lipschitz_c1: Some(1.0),
            grad_at_origin_b: Some(b),
            loss_at_origin_a: Some(0.5 * b * b),
        }
    }
}

/// Generated linear-regression data, persisted as `{seed, n, d, noise, X, y}`.
///
/// The generator draws true weights and inputs uniformly from `[-1, 1]` and
/// adds Gaussian label noise of standard deviation `noise`. Each seed fixes
/// one regression problem; [`LinRegData::held_out`] draws fresh samples from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinRegData {
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub noise: f64,
    #[serde(rename = "X")]
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl LinRegData {
    const WEIGHTS_STREAM: u64 = 0;
    const TRAIN_STREAM: u64 = 1;
    const TEST_STREAM: u64 = 2;

    pub fn generate(n: usize, d: usize, noise: f64, seed: u64) -> Result<Self> {
        Self::draw(n, d, noise, seed, Self::TRAIN_STREAM)
    }

    /// `n_test` fresh samples from the same generator (same true weights).
    pub fn held_out(&self, n_test: usize) -> Result<Self> {
        Self::draw(n_test, self.d, self.noise, self.seed, Self::TEST_STREAM)
    }

    pub fn true_weights(seed: u64, d: usize) -> Vec<f64> {
        let mut rng = RngStream::new(seed).split(Self::WEIGHTS_STREAM);
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn draw(n: usize, d: usize, noise: f64, seed: u64, stream: u64) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidConfig("linreg needs n >= 1 and d >= 1".into()));
        }
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise must be >= 0, got {noise}")));
        }
        let w = Self::true_weights(seed, d);
        let mut rng = RngStream::new(seed).split(stream);
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let xi: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let eps: f64 = StandardNormal.sample(&mut rng);
            y.push(xi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + noise * eps);
            x.push(xi);
        }
        Ok(Self {
            seed,
            n,
            d,
            noise,
            x,
            y,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let data: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        if data.x.len() != data.n || data.y.len() != data.n {
            return Err(Error::InvalidConfig("linreg file: n disagrees with X/y".into()));
        }
        for row in &data.x {
            check_dim(data.d, row.len())?;
        }
        Ok(data)
    }
}

/// Squared loss `l((x, y); theta) = (<x, theta> - y)² / 2` on a [`LinRegData`] set.
#[derive(Debug, Clone)]
pub struct LinRegSynthetic {
    domain: TorusDomain,
    data: LinRegData,
    bound: f64,
}

impl LinRegSynthetic {
    pub fn new(domain: TorusDomain, data: LinRegData) -> Result<Self> {
        check_dim(data.d, domain.dim())?;
        let upper = domain.upper();
        let reach: Vec<f64> = domain
            .lower()
            .iter()
            .zip(&upper)
            .map(|(l, h)| l.abs().max(h.abs()))
            .collect();
        // |<x, theta> - y| <= Σ|x_j| reach_j + |y| on the box.
        let bound = data
            .x
            .iter()
            .zip(&data.y)
            .map(|(x, y)| {
                let resid: f64 = x.iter().zip(&reach).map(|(a, r)| a.abs() * r).sum::<f64>() + y.abs();
                resid * norm(x)
            })
            .fold(0.0, f64::max);
        Ok(Self {
            domain,
            data,
            bound,
        })
    }

    /// `[-2, 2)^d`, which contains every possible true weight vector.
    pub fn default_domain(d: usize) -> TorusDomain {
        TorusDomain::centered(vec![4.0; d]).expect("valid domain")
    }

    pub fn generate(n: usize, d: usize, noise: f64, seed: u64) -> Result<Self> {
        Self::new(Self::default_domain(d), LinRegData::generate(n, d, noise, seed)?)
    }

    pub fn data(&self) -> &LinRegData {
        &self.data
    }

    /// Same loss on `n_test` held-out samples, on the same domain.
    pub fn held_out(&self, n_test: usize) -> Result<Self> {
        Self::new(self.domain.clone(), self.data.held_out(n_test)?)
    }
}

impl Objective for LinRegSynthetic {
    fn name(&self) -> &str {
        "linreg_synthetic"
    }

    fn domain(&self) -> &TorusDomain {
        &self.domain
    }

    fn n_samples(&self) -> usize {
        self.data.n
    }

    fn sample_loss(&self, i: usize, theta: &[f64]) -> f64 {
        let r: f64 = self.data.x[i].iter().zip(theta).map(|(a, t)| a * t).sum::<f64>() - self.data.y[i];
        0.5 * r * r
    }

    fn sample_gradient(&self, i: usize, theta: &[f64], out: &mut [f64]) {
        let x = &self.data.x[i];
        let r: f64 = x.iter().zip(theta).map(|(a, t)| a * t).sum::<f64>() - self.data.y[i];
        for (o, a) in out.iter_mut().zip(x) {
            *o = r * a;
        }
    }

    fn grad_norm_bound(&self) -> f64 {
        self.bound
    }

    fn metadata(&self) -> ObjectiveMetadata {
        let c1 = self.data.x.iter().map(|x| x.iter().map(|a| a * a).sum::<f64>()).fold(0.0, f64::max);
        let b = self
            .data
            .x
            .iter()
            .zip(&self.data.y)
            .map(|(x, y)| y.abs() * norm(x))
            .fold(0.0, f64::max);
        let a = self.data.y.iter().map(|y| 0.5 * y * y).fold(0.0, f64::max);
        ObjectiveMetadata {
            lipschitz_c1: Some(c1),
            grad_at_origin_b: Some(b),
            loss_at_origin_a: Some(a),
        }
    }
}
