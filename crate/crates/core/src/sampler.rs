//! Random-number substrate: seedable streams, uniform directions on the sphere,
//! and the inhomogeneous exponential law that drives the random learning rate.
//!
//! A random learning rate along a ray `theta + r v` has survival function
//!
//! ```text
//! P(eta >= t) = exp(-∫_0^t { beta <g(theta + r v), v>_+ + C } dr)
//! ```
//!
//! for a gradient field `g` and a constant floor `C > 0`. [`sample_ray_exponential`]
//! draws from it exactly by Poisson thinning against the ceiling
//! `beta * M + C`, where `M` bounds `|g|`. [`sample_ray_exponential_oracle`]
//! reaches the same law by numerically inverting the cumulative hazard and
//! exists to cross-check the thinning sampler.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::domain::TorusDomain;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm};

pub const RNG_ALGORITHM: &str = "chacha8";

/// A seeded ChaCha8 stream. Streams with different ids under one seed are
/// independent keystreams.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
    seed: u64,
    stream: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            inner,
            seed,
            stream,
        }
    }

    /// Child stream for sub-task `index`. Depends only on (seed, stream, index),
    /// never on how much of the parent has been consumed.
    pub fn split(&self, index: u64) -> Self {
        let child = splitmix64(splitmix64(self.stream) ^ index.wrapping_add(1));
        Self::with_stream(self.seed, child)
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 32-bit words consumed so far.
    pub fn draws(&self) -> u128 {
        self.inner.get_word_pos()
    }
}

/// Seed for trial `trial` of an experiment seeded with `base`.
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    splitmix64(base ^ splitmix64(trial.wrapping_add(0x5eed)))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Uniform direction on the unit sphere in `d` dimensions.
pub fn uniform_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Vec<f64>> {
    if d < 1 {
        return Err(Error::InvalidConfig("sphere dimension must be at least 1".into()));
    }
    let mut v = vec![0.0; d];
    fill_uniform_sphere(rng, &mut v);
    Ok(v)
}

/// Overwrites `out` with a uniform unit vector (normalized standard Gaussian).
pub fn fill_uniform_sphere<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        for x in out.iter_mut() {
            *x = StandardNormal.sample(rng);
        }
        let n = norm(out);
        if n > 1e-150 {
            out.iter_mut().for_each(|x| *x /= n);
            return;
        }
    }
}

/// Event rate along the ray `base + r * direction`:
/// `r -> beta * <g(base + r v), v>_+ + floor`.
///
/// Every evaluation verifies `|g| <= grad_bound`, which is what makes
/// `beta * grad_bound + floor` a valid thinning ceiling.
pub struct RayRate<'a, F> {
    domain: &'a TorusDomain,
    base: &'a [f64],
    direction: &'a [f64],
    beta: f64,
    floor: f64,
    grad_bound: f64,
    field: F,
    buffers: RayBuffers,
    evaluations: u64,
}

/// Scratch space for a [`RayRate`], reusable across rays of one dimension.
#[derive(Debug, Clone, Default)]
pub struct RayBuffers {
    point: Vec<f64>,
    grad: Vec<f64>,
}

impl RayBuffers {
    pub fn new(dim: usize) -> Self {
        Self {
            point: vec![0.0; dim],
            grad: vec![0.0; dim],
        }
    }
}

impl<'a, F> RayRate<'a, F>
where
    F: FnMut(&[f64], &mut [f64]),
{
    pub fn new(
        domain: &'a TorusDomain,
        base: &'a [f64],
        direction: &'a [f64],
        beta: f64,
        floor: f64,
        grad_bound: f64,
        field: F,
    ) -> Result<Self> {
        let buffers = RayBuffers::new(domain.dim());
        Self::with_buffers(domain, base, direction, beta, floor, grad_bound, field, buffers)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_buffers(
        domain: &'a TorusDomain,
        base: &'a [f64],
        direction: &'a [f64],
        beta: f64,
        floor: f64,
        grad_bound: f64,
        field: F,
        mut buffers: RayBuffers,
    ) -> Result<Self> {
        let d = domain.dim();
        check_dim(d, base.len())?;
        check_dim(d, direction.len())?;
        if (norm(direction) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "ray direction must be a unit vector, has norm {}",
                norm(direction)
            )));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be finite and >= 0, got {beta}")));
        }
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::InvalidConfig(format!("rate floor must be positive, got {floor}")));
        }
        if !(grad_bound >= 0.0 && grad_bound.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gradient bound must be finite, got {grad_bound}"
            )));
        }
        Ok(Self {
            domain,
            base,
            direction,
            beta,
            floor,
            grad_bound,
            field,
            buffers: {
                buffers.point.resize(d, 0.0);
                buffers.grad.resize(d, 0.0);
                buffers
            },
            evaluations: 0,
        })
    }

    pub fn into_buffers(self) -> RayBuffers {
        self.buffers
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn upper_bound(&self) -> f64 {
        self.beta * self.grad_bound + self.floor
    }

    /// Number of gradient evaluations performed so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn rate(&mut self, r: f64) -> Result<f64> {
        let RayBuffers { point, grad } = &mut self.buffers;
        self.domain.advance_into(self.base, self.direction, r, point);
        (self.field)(point, grad);
        self.evaluations += 1;
        let g_norm = norm(grad);
        if !(g_norm <= self.grad_bound * (1.0 + 1e-9) + 1e-300) {
            return Err(Error::GradientBoundViolated {
                observed: g_norm,
                bound: self.grad_bound,
            });
        }
        let rate = self.beta * dot(grad, self.direction).max(0.0) + self.floor;
        if rate < self.floor {
            return Err(Error::RateBelowFloor {
                observed: rate,
                floor: self.floor,
            });
        }
        Ok(rate)
    }
}

/// Exact draw of the first arrival of the ray's inhomogeneous Poisson process,
/// by thinning a homogeneous process at rate `upper_bound()`.
///
/// Proposals whose uniform falls under the floor are accepted without a
/// gradient evaluation, since `rate(r) >= floor` everywhere.
pub fn sample_ray_exponential<F, R>(rate: &mut RayRate<'_, F>, rng: &mut R) -> Result<f64>
where
    F: FnMut(&[f64], &mut [f64]),
    R: Rng + ?Sized,
{
    let ceiling = rate.upper_bound();
    let floor = rate.floor();
    let mut r = 0.0;
    loop {
        let gap: f64 = Exp1.sample(rng);
        r += gap / ceiling;
        let u = rng.random::<f64>() * ceiling;
        if u < floor {
            return Ok(r);
        }
        let lambda = rate.rate(r)?;
        if lambda > ceiling * (1.0 + 1e-12) {
            return Err(Error::GradientBoundViolated {
                observed: lambda,
                bound: ceiling,
            });
        }
        if u < lambda {
            return Ok(r);
        }
    }
}

/// Same law as [`sample_ray_exponential`], realized by inverting the CDF:
/// draws `u ~ U(0,1)` and solves `∫_0^t rate = -ln(1 - u)` to absolute
/// tolerance `tol` in `t`.
pub fn sample_ray_exponential_oracle<F, R>(
    rate: &mut RayRate<'_, F>,
    rng: &mut R,
    tol: f64,
) -> Result<f64>
where
    F: FnMut(&[f64], &mut [f64]),
    R: Rng + ?Sized,
{
    let u: f64 = rng.random();
    let floor = rate.floor();
    invert_cumulative_hazard(|r| rate.rate(r), u, floor, tol)
}

/// Solves `1 - exp(-∫_0^t rate) = u` for `t`, where `rate >= floor > 0`.
///
/// The hazard is integrated segment by segment with adaptive Simpson
/// quadrature; the crossing segment is then bisected. Works for rates with
/// jump discontinuities (e.g. a ray crossing a torus seam).
pub fn invert_cumulative_hazard<G>(mut rate: G, u: f64, floor: f64, tol: f64) -> Result<f64>
where
    G: FnMut(f64) -> Result<f64>,
{
    if !(0.0..1.0).contains(&u) {
        return Err(Error::InvalidConfig(format!("u must lie in [0, 1), got {u}")));
    }
    if !(floor > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidConfig("floor and tolerance must be positive".into()));
    }
    let target = -(-u).ln_1p();
    if target == 0.0 {
        return Ok(0.0);
    }
    // An error of δ in the hazard moves the root by at most δ / floor.
    let hazard_tol = 0.1 * tol * floor;
    let seg = 0.25 / floor;
    let mut quad = Simpson::new(hazard_tol);

    let mut a = 0.0;
    let mut fa = rate(a)?;
    let mut cum = 0.0;
    loop {
        let b = a + seg;
        let fb = rate(b)?;
        let piece = quad.integrate(&mut rate, a, b, fa, fb)?;
        if cum + piece >= target {
            break;
        }
        cum += piece;
        a = b;
        fa = fb;
        if !cum.is_finite() || a > 1e12 / floor {
            return Err(Error::QuadratureFailed { tol });
        }
    }

    // Bisect on [lo, hi] keeping `cum` = hazard at `lo`.
    let mut lo = a;
    let mut f_lo = fa;
    let mut hi = a + seg;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let f_mid = rate(mid)?;
        let piece = quad.integrate(&mut rate, lo, mid, f_lo, f_mid)?;
        if cum + piece >= target {
            hi = mid;
        } else {
            cum += piece;
            lo = mid;
            f_lo = f_mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

struct Simpson {
    tol: f64,
    budget: u64,
}

impl Simpson {
    const MIN_WIDTH: f64 = 1e-13;
    const MAX_EVALS: u64 = 50_000_000;

    fn new(tol: f64) -> Self {
        Self {
            tol,
            budget: Self::MAX_EVALS,
        }
    }

    fn integrate<G>(&mut self, f: &mut G, a: f64, b: f64, fa: f64, fb: f64) -> Result<f64>
    where
        G: FnMut(f64) -> Result<f64>,
    {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        self.recurse(f, a, b, fa, fm, fb, whole, self.tol)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<G>(
        &mut self,
        f: &mut G,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
    ) -> Result<f64>
    where
        G: FnMut(f64) -> Result<f64>,
    {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm)?;
        let frm = f(rm)?;
        self.budget = self
            .budget
            .checked_sub(2)
            .ok_or(Error::QuadratureFailed { tol: self.tol })?;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if !delta.is_finite() {
            return Err(Error::QuadratureFailed { tol: self.tol });
        }
        // Jumps never satisfy the error test; below MIN_WIDTH they contribute
        // at most jump * MIN_WIDTH.
        if delta.abs() <= 15.0 * tol || b - a < Self::MIN_WIDTH {
            return Ok(left + right + delta / 15.0);
        }
        let half = (0.5 * tol).max(1e-18);
        Ok(self.recurse(f, a, m, fa, flm, fm, left, half)?
            + self.recurse(f, m, b, fm, frm, fb, right, half)?)
    }
}
