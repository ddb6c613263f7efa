//! Closed-form stationary density of Poisson SGD, its grid normalization, and
//! an exact rejection sampler used as the reference in distribution tests.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::domain::{Point, TorusDomain};
use crate::error::{check_dim, Error, Result};
use crate::linalg::norm;
use crate::metrics::MeanEstimate;
use crate::objective::{batch_gradient_into, empirical_risk, Objective};
use crate::sampler::fill_uniform_sphere;

/// `E|v_1|` for `v` uniform on the unit sphere in `R^d`:
/// `Γ(d/2) / (√π Γ(d/2 + 1/2))`.
pub fn mean_abs_coordinate(d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidConfig("dimension must be positive".into()));
    }
    let h = d as f64 / 2.0;
    Ok((ln_gamma(h) - ln_gamma(h + 0.5)).exp() / std::f64::consts::PI.sqrt())
}

/// Monte Carlo estimate of `E[(cos φ)_+]`, `φ` the angle between two
/// independent uniform unit vectors in `R^d`.
pub fn cos_plus_expectation<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> Result<MeanEstimate> {
    if d < 2 {
        return Err(Error::InvalidConfig("need d >= 2".into()));
    }
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            fill_uniform_sphere(rng, &mut a);
            fill_uniform_sphere(rng, &mut b);
            a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>().max(0.0)
        })
        .collect();
    MeanEstimate::from_samples(&draws)
}

/// Unnormalized density `(floor + w β |∇L(θ)|) exp(-β L(θ))`.
///
/// [`StationaryDensity::new`] uses the Poisson SGD floor `βM + 1/ε` and the
/// gradient weight `w = E|v_1|`.
pub struct StationaryDensity<'a, O: ?Sized> {
    obj: &'a O,
    beta: f64,
    floor: f64,
    grad_weight: f64,
}

impl<O: ?Sized> Clone for StationaryDensity<'_, O> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<O: ?Sized> Copy for StationaryDensity<'_, O> {}

impl<'a, O: Objective + ?Sized> StationaryDensity<'a, O> {
    pub fn new(obj: &'a O, beta: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        Self::with_floor(obj, beta, beta * obj.grad_norm_bound() + 1.0 / epsilon)
    }

    /// Same shape with an arbitrary positive floor, e.g. `Λ_ref + C_B` for the
    /// bouncy particle sampler.
    pub fn with_floor(obj: &'a O, beta: f64, floor: f64) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be finite and >= 0, got {beta}")));
        }
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::InvalidConfig(format!("floor must be positive, got {floor}")));
        }
        Ok(Self {
            obj,
            beta,
            floor,
            grad_weight: mean_abs_coordinate(obj.dim())?,
        })
    }

    /// Replaces the weight on `β|∇L|`.
    pub fn gradient_weight(mut self, w: f64) -> Self {
        self.grad_weight = w;
        self
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn weight(&self) -> f64 {
        self.grad_weight
    }

    pub fn domain(&self) -> &TorusDomain {
        self.obj.domain()
    }

    pub fn log_unnormalized(&self, theta: &[f64]) -> Result<f64> {
        let d = self.obj.dim();
        check_dim(d, theta.len())?;
        let loss = empirical_risk(self.obj, theta)?;
        let mut g = vec![0.0; d];
        let mut scratch = vec![0.0; d];
        let all: Vec<usize> = (0..self.obj.n_samples()).collect();
        batch_gradient_into(self.obj, &all, theta, &mut g, &mut scratch);
        let pre = self.floor + self.grad_weight * self.beta * norm(&g);
        Ok(pre.ln() - self.beta * loss)
    }

    pub fn unnormalized(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.log_unnormalized(theta)?.exp())
    }
}

const MIN_BINS: usize = 64;
const MAX_DIM: usize = 3;
const MAX_FINE_POINTS: usize = 1 << 22;
const GRID_RTOL: f64 = 1e-4;

/// Probability masses of a density on a regular grid of bins over a torus.
/// Bins are stored row-major with the last coordinate fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    domain: TorusDomain,
    bins: Vec<usize>,
    masses: Vec<f64>,
    /// `ln ∫ u` of the unnormalized density.
    log_z: f64,
    /// Largest `ln u` seen while integrating.
    log_max: f64,
    /// Midpoints per bin per axis at convergence.
    oversampling: usize,
}

impl GridDensity {
    /// The uniform law on `bins` cells.
    pub fn uniform(domain: TorusDomain, bins: Vec<usize>) -> Result<Self> {
        check_dim(domain.dim(), bins.len())?;
        if bins.contains(&0) {
            return Err(Error::BinMismatch("every axis needs at least one bin".into()));
        }
        let total: usize = bins.iter().product();
        let log_z = domain.volume().ln();
        Ok(Self {
            domain,
            bins,
            masses: vec![1.0 / total as f64; total],
            log_z,
            log_max: 0.0,
            oversampling: 1,
        })
    }

    pub fn domain(&self) -> &TorusDomain {
        &self.domain
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_z
    }

    pub fn log_max(&self) -> f64 {
        self.log_max
    }

    pub fn oversampling(&self) -> usize {
        self.oversampling
    }

    fn widths(&self) -> Vec<f64> {
        self.domain
            .sides()
            .iter()
            .zip(&self.bins)
            .map(|(s, &b)| s / b as f64)
            .collect()
    }

    /// Flat bin index of a point inside the domain box.
    pub fn bin_index(&self, x: &[f64]) -> Result<usize> {
        check_dim(self.bins.len(), x.len())?;
        if !self.domain.contains(x) {
            return Err(Error::BinMismatch(format!("{x:?} lies outside the grid")));
        }
        let mut flat = 0;
        for (k, (&xi, &nb)) in x.iter().zip(&self.bins).enumerate() {
            let rel = (xi - self.domain.lower()[k]) / self.domain.sides()[k];
            let j = ((rel * nb as f64) as usize).min(nb - 1);
            flat = flat * nb + j;
        }
        Ok(flat)
    }

    pub fn histogram<P: AsRef<[f64]>>(&self, samples: &[P]) -> Result<Vec<u64>> {
        let mut counts = vec![0u64; self.masses.len()];
        for s in samples {
            counts[self.bin_index(s.as_ref())?] += 1;
        }
        Ok(counts)
    }

    pub fn cell_center(&self, flat: usize) -> Vec<f64> {
        let w = self.widths();
        let mut rest = flat;
        let mut c = vec![0.0; self.bins.len()];
        for k in (0..self.bins.len()).rev() {
            let j = rest % self.bins[k];
            rest /= self.bins[k];
            c[k] = self.domain.lower()[k] + (j as f64 + 0.5) * w[k];
        }
        c
    }

    /// `Σ mass · f(center)`.
    pub fn expectation<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.masses
            .iter()
            .enumerate()
            .map(|(i, m)| m * f(&self.cell_center(i)))
            .sum()
    }

    /// Marginal masses along one axis.
    pub fn marginal(&self, axis: usize) -> Result<Vec<f64>> {
        if axis >= self.bins.len() {
            return Err(Error::DimensionMismatch {
                expected: self.bins.len(),
                found: axis + 1,
            });
        }
        let stride: usize = self.bins[axis + 1..].iter().product();
        let nb = self.bins[axis];
        let mut out = vec![0.0; nb];
        for (i, m) in self.masses.iter().enumerate() {
            out[(i / stride) % nb] += m;
        }
        Ok(out)
    }

    /// CSV with one row per bin: center coordinates, mass, and density.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let cell: f64 = self.widths().iter().product();
        let header: Vec<String> = (0..self.bins.len()).map(|k| format!("theta_{k}")).collect();
        writeln!(out, "{},mass,density", header.join(","))?;
        for (i, m) in self.masses.iter().enumerate() {
            let c: Vec<String> = self.cell_center(i).iter().map(|x| x.to_string()).collect();
            writeln!(out, "{},{},{}", c.join(","), m, m / cell)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(f)
    }
}

/// Integrates the density over `bins_per_dim` bins per axis, doubling the
/// midpoint oversampling until the normalizer changes by less than 1e-4
/// (relative).
pub fn normalize_on_grid<O: Objective + ?Sized>(
    density: &StationaryDensity<'_, O>,
    bins_per_dim: usize,
) -> Result<GridDensity> {
    let domain = density.domain().clone();
    let d = domain.dim();
    if d > MAX_DIM {
        return Err(Error::InvalidConfig(format!("grid normalization supports d <= {MAX_DIM}, got {d}")));
    }
    if bins_per_dim < MIN_BINS {
        return Err(Error::InvalidConfig(format!("need at least {MIN_BINS} bins per axis")));
    }
    let mut prev: Option<GridDensity> = None;
    let mut sub = 1;
    let mut change = f64::INFINITY;
    while (bins_per_dim * sub).pow(d as u32) <= MAX_FINE_POINTS {
        let next = integrate(density, &domain, bins_per_dim, sub)?;
        if let Some(p) = &prev {
            change = (next.log_z - p.log_z).exp_m1().abs();
            if change < GRID_RTOL {
                return Ok(next);
            }
        }
        prev = Some(next);
        sub *= 2;
    }
    Err(Error::NonConvergentGrid {
        change,
        resolution: bins_per_dim * sub / 2,
    })
}

fn integrate<O: Objective + ?Sized>(
    density: &StationaryDensity<'_, O>,
    domain: &TorusDomain,
    bins_per_dim: usize,
    sub: usize,
) -> Result<GridDensity> {
    let d = domain.dim();
    let fine = bins_per_dim * sub;
    let h: Vec<f64> = domain.sides().iter().map(|s| s / fine as f64).collect();
    let total = fine.pow(d as u32);
    let mut logs = Vec::with_capacity(total);
    let mut owner = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    for _ in 0..total {
        let mut coarse = 0;
        for k in 0..d {
            x[k] = domain.lower()[k] + (idx[k] as f64 + 0.5) * h[k];
            coarse = coarse * bins_per_dim + idx[k] / sub;
        }
        logs.push(density.log_unnormalized(&x)?);
        owner.push(coarse);
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < fine {
                break;
            }
            idx[k] = 0;
        }
    }
    let log_max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut masses = vec![0.0; bins_per_dim.pow(d as u32)];
    for (l, &c) in logs.iter().zip(&owner) {
        masses[c] += (l - log_max).exp();
    }
    let sum: f64 = masses.iter().sum();
    masses.iter_mut().for_each(|m| *m /= sum);
    let cell: f64 = h.iter().product();
    Ok(GridDensity {
        domain: domain.clone(),
        bins: vec![bins_per_dim; d],
        masses,
        log_z: log_max + (sum * cell).ln(),
        log_max,
        oversampling: sub,
    })
}

/// Exact draws from the normalized density by rejection from the uniform law,
/// with envelope `1.1 × max u` taken from the grid.
pub fn sample_stationary_oracle<O, R>(
    density: &StationaryDensity<'_, O>,
    grid: &GridDensity,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Point>>
where
    O: Objective + ?Sized,
    R: Rng + ?Sized,
{
    let log_env = grid.log_max + 1.1f64.ln();
    let domain = density.domain();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = domain.sample_uniform(rng);
        let lu = density.log_unnormalized(&p)?;
        if lu > log_env {
            return Err(Error::EnvelopeViolation {
                value: lu.exp(),
                envelope: log_env.exp(),
            });
        }
        let u: f64 = rng.random();
        if u.ln() < lu - log_env {
            out.push(p);
        }
    }
    Ok(out)
}
