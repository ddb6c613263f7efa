//! Poisson SGD: SGD whose learning rate is a random draw from an inhomogeneous
//! exponential law and whose velocity is updated by a norm-preserving
//! Householder reflection.
//!
//! One iteration `k`:
//! 1. draw a mini-batch `I_k`;
//! 2. draw `eta_k` with survival `exp(-∫_0^t {beta <∇L_k(theta + r v), v>_+ + 1/epsilon} dr)`
//!    along the current ray;
//! 3. move `theta <- wrap(theta + eta_k v)`;
//! 4. reflect `v` about the hyperplane normal to `∇L_k(theta)` at the *new* point.
//!
//! The same mini-batch serves steps 2 and 4.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::domain::{Point, TorusDomain};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm, normalize};
use crate::objective::{batch_gradient_into, sample_minibatch, MiniBatch, Objective};
use crate::record::{RecordHeader, RunRecord, StepEntry, VelocityEvent};
use crate::sampler::{sample_ray_exponential, RayBuffers, RayRate, RngStream, RNG_ALGORITHM};

/// Gradients with norm below this leave the velocity unchanged.
pub const ZERO_GRADIENT_TOL: f64 = 1e-12;

const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonSgdConfig {
    /// Inverse temperature.
    pub beta: f64,
    /// The rate floor is `1 / epsilon`.
    pub epsilon: f64,
    pub steps: u64,
    /// Mini-batch size; full batch when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    pub initial_point: Vec<f64>,
    pub initial_velocity: Vec<f64>,
    pub seed: u64,
}

impl PoissonSgdConfig {
    pub fn new(
        beta: f64,
        epsilon: f64,
        steps: u64,
        initial_point: Vec<f64>,
        initial_velocity: Vec<f64>,
        seed: u64,
    ) -> Self {
        Self {
            beta,
            epsilon,
            steps,
            batch_size: None,
            initial_point,
            initial_velocity,
            seed,
        }
    }

    pub fn with_batch_size(mut self, m: usize) -> Self {
        self.batch_size = Some(m);
        self
    }

    /// Constant added to the learning-rate intensity, always `1 / epsilon`.
    pub fn rate_floor(&self) -> f64 {
        1.0 / self.epsilon
    }

    pub fn validate<O: Objective + ?Sized>(&self, obj: &O) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        let n = obj.n_samples();
        if let Some(m) = self.batch_size {
            if m == 0 || m > n {
                return Err(Error::InvalidBatchSize { m, n });
            }
        }
        check_dim(obj.dim(), self.initial_point.len())?;
        check_unit(obj.dim(), &self.initial_velocity)
    }
}

pub(crate) fn check_unit(dim: usize, v: &[f64]) -> Result<()> {
    check_dim(dim, v.len())?;
    if (norm(v) - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidConfig(format!(
            "initial velocity must be a unit vector, has norm {}",
            norm(v)
        )));
    }
    Ok(())
}

/// `(theta_k, v_k)` plus the iteration counter and the random stream.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub theta: Point,
    pub velocity: Vec<f64>,
    pub step: u64,
    pub rng: RngStream,
}

impl OptimizerState {
    pub fn new(domain: &TorusDomain, theta: &[f64], velocity: &[f64], seed: u64) -> Result<Self> {
        check_unit(domain.dim(), velocity)?;
        Ok(Self {
            theta: domain.wrap(theta)?,
            velocity: velocity.to_vec(),
            step: 0,
            rng: RngStream::new(seed),
        })
    }
}

/// What one iteration did, besides mutating the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub eta: f64,
    /// Norm of the gradient used for the velocity update.
    pub grad_norm: f64,
    pub event: VelocityEvent,
    /// Probability of choosing reflection (BPS only).
    pub reflect_prob: Option<f64>,
}

/// Householder reflection `v - 2 (<g, v> / |g|²) g`.
/// Returns `v` unchanged when `|g| < ZERO_GRADIENT_TOL`.
pub fn reflect(v: &[f64], g: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    reflect_in_place(&mut out, g);
    out
}

/// In-place [`reflect`]; returns whether a reflection was applied.
pub fn reflect_in_place(v: &mut [f64], g: &[f64]) -> bool {
    let gg = dot(g, g);
    if gg.sqrt() < ZERO_GRADIENT_TOL {
        return false;
    }
    let alpha = 2.0 * dot(g, v) / gg;
    v.iter_mut().zip(g).for_each(|(vi, gi)| *vi -= alpha * gi);
    true
}

/// Reusable buffers for the inner loop.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    pub grad: Vec<f64>,
    pub scratch: Vec<f64>,
    pub ray: Option<RayBuffers>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        Self {
            grad: vec![0.0; dim],
            scratch: vec![0.0; dim],
            ray: Some(RayBuffers::new(dim)),
        }
    }
}

/// Draws a ray length from `theta` along `velocity` for the gradient field of
/// `indices` and moves `theta` by it.
#[allow(clippy::too_many_arguments)]
pub(crate) fn fly<O: Objective + ?Sized>(
    obj: &O,
    indices: &[usize],
    theta: &mut Point,
    velocity: &[f64],
    beta: f64,
    floor: f64,
    rng: &mut RngStream,
    ws: &mut Workspace,
) -> Result<f64> {
    let domain = obj.domain();
    let scratch = &mut ws.scratch;
    let field = |x: &[f64], out: &mut [f64]| batch_gradient_into(obj, indices, x, out, scratch);
    let buffers = ws.ray.take().unwrap_or_default();
    let mut ray = RayRate::with_buffers(
        domain,
        theta,
        velocity,
        beta,
        floor,
        obj.grad_norm_bound(),
        field,
        buffers,
    )?;
    let eta = sample_ray_exponential(&mut ray, rng);
    ws.ray = Some(ray.into_buffers());
    let eta = eta?;
    let coords = theta.coords_mut();
    coords.iter_mut().zip(velocity).for_each(|(t, v)| *t += eta * v);
    domain.wrap_in_place(coords);
    Ok(eta)
}

/// Gradient of `indices` at `theta` into `ws.grad`, with the bound check.
pub(crate) fn gradient_checked<O: Objective + ?Sized>(
    obj: &O,
    indices: &[usize],
    theta: &[f64],
    ws: &mut Workspace,
) -> Result<f64> {
    batch_gradient_into(obj, indices, theta, &mut ws.grad, &mut ws.scratch);
    let g_norm = norm(&ws.grad);
    let bound = obj.grad_norm_bound();
    if !(g_norm <= bound * (1.0 + 1e-9) + 1e-300) {
        return Err(Error::GradientBoundViolated {
            observed: g_norm,
            bound,
        });
    }
    Ok(g_norm)
}

/// Stepper that owns the state and scratch buffers of one Poisson SGD run.
pub struct PoissonSgd<'a, O: ?Sized> {
    obj: &'a O,
    cfg: &'a PoissonSgdConfig,
    state: OptimizerState,
    batch: MiniBatch,
    ws: Workspace,
}

impl<'a, O: Objective + ?Sized> PoissonSgd<'a, O> {
    pub fn new(obj: &'a O, cfg: &'a PoissonSgdConfig) -> Result<Self> {
        cfg.validate(obj)?;
        let state =
            OptimizerState::new(obj.domain(), &cfg.initial_point, &cfg.initial_velocity, cfg.seed)?;
        Self::from_state(obj, cfg, state)
    }

    pub fn from_state(obj: &'a O, cfg: &'a PoissonSgdConfig, state: OptimizerState) -> Result<Self> {
        cfg.validate(obj)?;
        check_dim(obj.dim(), state.theta.len())?;
        check_unit(obj.dim(), &state.velocity)?;
        Ok(Self {
            obj,
            cfg,
            state,
            batch: MiniBatch::full(obj.n_samples()),
            ws: Workspace::new(obj.dim()),
        })
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn into_state(self) -> OptimizerState {
        self.state
    }

    /// Mini-batch drawn by the latest step.
    pub fn last_batch(&self) -> &MiniBatch {
        &self.batch
    }

    pub fn step(&mut self) -> Result<StepOutcome> {
        let n = self.obj.n_samples();
        let m = self.cfg.batch_size.unwrap_or(n);
        if m < n {
            self.batch = sample_minibatch(n, m, &mut self.state.rng)?;
        } else if self.batch.len() != n {
            self.batch = MiniBatch::full(n);
        }
        let OptimizerState {
            theta,
            velocity,
            rng,
            step,
        } = &mut self.state;
        let eta = fly(
            self.obj,
            self.batch.indices(),
            theta,
            velocity,
            self.cfg.beta,
            self.cfg.rate_floor(),
            rng,
            &mut self.ws,
        )?;
        let grad_norm = gradient_checked(self.obj, self.batch.indices(), theta, &mut self.ws)?;
        let event = if reflect_in_place(velocity, &self.ws.grad) {
            VelocityEvent::Reflect
        } else {
            VelocityEvent::Unchanged
        };
        normalize(velocity);
        *step += 1;
        Ok(StepOutcome {
            eta,
            grad_norm,
            event,
            reflect_prob: None,
        })
    }
}

/// One iteration on an external state.
pub fn poisson_sgd_step<O: Objective + ?Sized>(
    state: &mut OptimizerState,
    obj: &O,
    cfg: &PoissonSgdConfig,
) -> Result<StepOutcome> {
    let owned = std::mem::replace(
        state,
        OptimizerState {
            theta: obj.domain().wrap(&cfg.initial_point)?,
            velocity: cfg.initial_velocity.clone(),
            step: 0,
            rng: RngStream::new(0),
        },
    );
    let mut stepper = PoissonSgd::from_state(obj, cfg, owned)?;
    let outcome = stepper.step();
    *state = stepper.into_state();
    outcome
}

/// Runs `cfg.steps` iterations, calling `observe` after each, and returns the
/// final state `(theta_K, v_K)`.
pub fn run_poisson_sgd_with<O, F>(obj: &O, cfg: &PoissonSgdConfig, mut observe: F) -> Result<OptimizerState>
where
    O: Objective + ?Sized,
    F: FnMut(&OptimizerState, &MiniBatch, &StepOutcome) -> Result<()>,
{
    let mut stepper = PoissonSgd::new(obj, cfg)?;
    for _ in 0..cfg.steps {
        let outcome = stepper.step()?;
        observe(&stepper.state, &stepper.batch, &outcome)?;
    }
    Ok(stepper.into_state())
}

/// Full trajectory of a run, every step recorded.
pub fn run_poisson_sgd<O: Objective + ?Sized>(obj: &O, cfg: &PoissonSgdConfig) -> Result<RunRecord> {
    run_poisson_sgd_recorded(obj, cfg, 1, "", 0)
}

/// Trajectory keeping every `stride`-th step and the last one.
pub fn run_poisson_sgd_recorded<O: Objective + ?Sized>(
    obj: &O,
    cfg: &PoissonSgdConfig,
    stride: u64,
    label: &str,
    trial: u64,
) -> Result<RunRecord> {
    let start = Instant::now();
    let mut record = RunRecord::new(RecordHeader {
        algorithm: "poisson_sgd".into(),
        label: label.into(),
        trial,
        objective: obj.name().into(),
        dim: obj.dim(),
        steps: cfg.steps,
        stride: stride.max(1),
        rng: RNG_ALGORITHM.into(),
        seed: cfg.seed,
        config: serde_json::to_value(cfg)?,
    });
    let full = cfg.batch_size.is_none_or(|m| m == obj.n_samples());
    run_poisson_sgd_with(obj, cfg, |state, batch, out| {
        if record.should_record(state.step) {
            record.steps.push(StepEntry {
                k: state.step,
                theta: state.theta.to_vec(),
                velocity: Some(state.velocity.clone()),
                eta: out.eta,
                batch: (!full).then(|| batch.indices().to_vec()),
                grad_norm: out.grad_norm,
                event: Some(out.event),
                reflect_prob: None,
                chain: None,
            });
        }
        Ok(())
    })?;
    record.wall_time = start.elapsed();
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{DoubleWell2d, QuadraticBowl};

    #[test]
    fn reflect_examples() {
        assert_eq!(reflect(&[1.0, 0.0], &[2.0, 0.0]), vec![-1.0, 0.0]);
        assert_eq!(reflect(&[1.0, 0.0], &[0.0, 3.0]), vec![1.0, 0.0]);
        let r = reflect(&[0.6, 0.8], &[1.0, 0.0]);
        assert!((r[0] + 0.6).abs() < 1e-15 && (r[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_keeps_velocity() {
        let mut v = vec![0.6, 0.8];
        assert!(!reflect_in_place(&mut v, &[1e-13, 0.0]));
        assert_eq!(v, vec![0.6, 0.8]);
    }

    struct Flat(TorusDomain);

    impl Objective for Flat {
        fn name(&self) -> &str {
            "flat"
        }
        fn domain(&self) -> &TorusDomain {
            &self.0
        }
        fn n_samples(&self) -> usize {
            1
        }
        fn sample_loss(&self, _: usize, _: &[f64]) -> f64 {
            1.0
        }
        fn sample_gradient(&self, _: usize, _: &[f64], out: &mut [f64]) {
            out.iter_mut().for_each(|x| *x = 0.0);
        }
        fn grad_norm_bound(&self) -> f64 {
            0.0
        }
    }

    #[test]
    fn flat_objective_moves_by_exponential_steps_without_turning() {
        let flat = Flat(TorusDomain::cube(2, 1e6).unwrap());
        let cfg = PoissonSgdConfig::new(1.0, 0.5, 20_000, vec![0.0, 0.0], vec![0.6, 0.8], 1);
        let rec = run_poisson_sgd(&flat, &cfg).unwrap();
        let mean_eta = rec.steps.iter().map(|s| s.eta).sum::<f64>() / rec.steps.len() as f64;
        // Exp(1/epsilon) = Exp(2) has mean 0.5 and sd 0.5.
        assert!((mean_eta - 0.5).abs() < 4.0 * 0.5 / (20_000f64).sqrt());
        let last = rec.steps.last().unwrap();
        assert_eq!(last.velocity.as_deref(), Some(&[0.6, 0.8][..]));
        assert!(rec.steps.iter().all(|s| s.event == Some(VelocityEvent::Unchanged)));
        let travelled: f64 = rec.steps.iter().map(|s| s.eta).sum();
        assert!((last.theta[0] - 0.6 * travelled).abs() < 1e-6);
    }

    #[test]
    fn one_dimensional_bowl_flips_velocity_right_of_minimum() {
        let bowl = QuadraticBowl::centered(1, 100.0).unwrap();
        let cfg = PoissonSgdConfig::new(1.0, 1.0, 1, vec![2.0], vec![1.0], 3);
        let mut state =
            OptimizerState::new(bowl.domain(), &cfg.initial_point, &cfg.initial_velocity, 3).unwrap();
        poisson_sgd_step(&mut state, &bowl, &cfg).unwrap();
        assert!(state.theta[0] > 2.0);
        assert_eq!(state.velocity, vec![-1.0]);
    }

    #[test]
    fn zero_steps_is_a_no_op() {
        let dw = DoubleWell2d::with_default_domain();
        let cfg = PoissonSgdConfig::new(0.05, 0.05, 0, vec![-3.0, 0.0], vec![1.0, 0.0], 0);
        let rec = run_poisson_sgd(&dw, &cfg).unwrap();
        assert!(rec.steps.is_empty());
        let state = run_poisson_sgd_with(&dw, &cfg, |_, _, _| Ok(())).unwrap();
        assert_eq!(state.theta.coords(), &[-3.0, 0.0]);
    }

    #[test]
    fn replay_is_exact() {
        let dw = DoubleWell2d::with_default_domain();
        let cfg = PoissonSgdConfig::new(0.05, 0.05, 3, vec![-3.1, 0.2], vec![0.0, 1.0], 17);
        let a = run_poisson_sgd(&dw, &cfg).unwrap();
        let b = run_poisson_sgd(&dw, &cfg).unwrap();
        assert_eq!(a.to_ndjson().unwrap(), b.to_ndjson().unwrap());
        assert_eq!(a.steps.len(), 3);
    }

    #[test]
    fn external_step_matches_stepper() {
        let dw = DoubleWell2d::with_default_domain();
        let cfg = PoissonSgdConfig::new(0.05, 0.05, 5, vec![-3.1, 0.2], vec![0.0, 1.0], 4);
        let rec = run_poisson_sgd(&dw, &cfg).unwrap();
        let mut state = OptimizerState::new(dw.domain(), &cfg.initial_point, &cfg.initial_velocity, cfg.seed).unwrap();
        for entry in &rec.steps {
            poisson_sgd_step(&mut state, &dw, &cfg).unwrap();
            assert_eq!(state.theta.coords(), entry.theta.as_slice());
        }
    }

    #[test]
    fn invalid_configs() {
        let dw = DoubleWell2d::with_default_domain();
        let good = PoissonSgdConfig::new(0.05, 0.05, 1, vec![0.0, 0.0], vec![1.0, 0.0], 0);
        assert!(good.validate(&dw).is_ok());
        let mut bad = good.clone();
        bad.epsilon = 0.0;
        assert!(bad.validate(&dw).is_err());
        let mut bad = good.clone();
        bad.initial_velocity = vec![1.0, 1.0];
        assert!(bad.validate(&dw).is_err());
        let bad = good.clone().with_batch_size(2);
        assert!(matches!(bad.validate(&dw), Err(Error::InvalidBatchSize { .. })));
    }
}
