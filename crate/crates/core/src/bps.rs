//! Discrete bouncy particle sampler.
//!
//! Each iteration draws a flight length from the full-batch intensity
//! `beta <∇L(theta + r v), v>_+ + lambda_ref + c_b`, moves, and then either
//! reflects the velocity about the gradient (with probability
//! `(beta <∇L, v>_+ + c_b) / (beta <∇L, v>_+ + lambda_ref + c_b)`) or refreshes it
//! uniformly on the sphere.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, normalize};
use crate::metrics::sliced_wasserstein1;
use crate::objective::Objective;
use crate::poisson_sgd::{
    check_unit, fly, gradient_checked, reflect_in_place, run_poisson_sgd_with, OptimizerState,
    PoissonSgdConfig, StepOutcome, Workspace,
};
use crate::record::{RecordHeader, RunRecord, StepEntry, VelocityEvent};
use crate::sampler::{fill_uniform_sphere, trial_seed, RngStream, RNG_ALGORITHM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpsConfig {
    pub beta: f64,
    /// Refreshment intensity, strictly positive.
    pub lambda_ref: f64,
    /// Extra reflection intensity, nonnegative.
    pub c_b: f64,
    /// When set, `lambda_ref + c_b` must equal `beta * M + 1 / epsilon`,
    /// which ties the sampler to Poisson SGD run with the same `epsilon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub steps: u64,
    pub initial_point: Vec<f64>,
    pub initial_velocity: Vec<f64>,
    pub seed: u64,
}

impl BpsConfig {
    /// Arbitrary positive intensities, no coupling constraint.
    pub fn free(
        beta: f64,
        lambda_ref: f64,
        c_b: f64,
        steps: u64,
        initial_point: Vec<f64>,
        initial_velocity: Vec<f64>,
        seed: u64,
    ) -> Self {
        Self {
            beta,
            lambda_ref,
            c_b,
            epsilon: None,
            steps,
            initial_point,
            initial_velocity,
            seed,
        }
    }

    /// Coupled to Poisson SGD: `lambda_ref = beta * M + 1/epsilon - c_b`.
    #[allow(clippy::too_many_arguments)]
    pub fn coupled<O: Objective + ?Sized>(
        obj: &O,
        beta: f64,
        epsilon: f64,
        c_b: f64,
        steps: u64,
        initial_point: Vec<f64>,
        initial_velocity: Vec<f64>,
        seed: u64,
    ) -> Self {
        let total = beta * obj.grad_norm_bound() + 1.0 / epsilon;
        Self {
            beta,
            lambda_ref: total - c_b,
            c_b,
            epsilon: Some(epsilon),
            steps,
            initial_point,
            initial_velocity,
            seed,
        }
    }

    /// `lambda_ref + c_b`.
    pub fn rate_floor(&self) -> f64 {
        self.lambda_ref + self.c_b
    }

    pub fn validate<O: Objective + ?Sized>(&self, obj: &O) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.lambda_ref > 0.0 && self.lambda_ref.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda_ref must be positive, got {}",
                self.lambda_ref
            )));
        }
        if !(self.c_b >= 0.0 && self.c_b.is_finite()) {
            return Err(Error::InvalidConfig(format!("c_b must be >= 0, got {}", self.c_b)));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::InvalidConfig(format!("epsilon must be positive, got {eps}")));
            }
            let want = self.beta * obj.grad_norm_bound() + 1.0 / eps;
            if (self.rate_floor() - want).abs() > 1e-12 * want {
                return Err(Error::InvalidConfig(format!(
                    "coupled mode needs lambda_ref + c_b = beta * M + 1/epsilon = {want}, got {}",
                    self.rate_floor()
                )));
            }
        }
        check_dim(obj.dim(), self.initial_point.len())?;
        check_unit(obj.dim(), &self.initial_velocity)
    }
}

/// Probability of reflecting rather than refreshing, given `<∇L(theta), v>`.
pub fn reflection_probability(beta: f64, grad_dot_v: f64, lambda_ref: f64, c_b: f64) -> f64 {
    let push = beta * grad_dot_v.max(0.0) + c_b;
    push / (push + lambda_ref)
}

pub struct Bps<'a, O: ?Sized> {
    obj: &'a O,
    cfg: &'a BpsConfig,
    state: OptimizerState,
    all: Vec<usize>,
    ws: Workspace,
}

impl<'a, O: Objective + ?Sized> Bps<'a, O> {
    pub fn new(obj: &'a O, cfg: &'a BpsConfig) -> Result<Self> {
        cfg.validate(obj)?;
        let state =
            OptimizerState::new(obj.domain(), &cfg.initial_point, &cfg.initial_velocity, cfg.seed)?;
        Ok(Self {
            obj,
            cfg,
            state,
            all: (0..obj.n_samples()).collect(),
            ws: Workspace::new(obj.dim()),
        })
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn into_state(self) -> OptimizerState {
        self.state
    }

    pub fn step(&mut self) -> Result<StepOutcome> {
        let OptimizerState {
            theta,
            velocity,
            rng,
            step,
        } = &mut self.state;
        let cfg = self.cfg;
        let eta = fly(
            self.obj,
            &self.all,
            theta,
            velocity,
            cfg.beta,
            cfg.rate_floor(),
            rng,
            &mut self.ws,
        )?;
        let grad_norm = gradient_checked(self.obj, &self.all, theta, &mut self.ws)?;
        let p = reflection_probability(cfg.beta, dot(&self.ws.grad, velocity), cfg.lambda_ref, cfg.c_b);
        let event = if rng.random::<f64>() < p {
            if reflect_in_place(velocity, &self.ws.grad) {
                VelocityEvent::Reflect
            } else {
                VelocityEvent::Unchanged
            }
        } else {
            fill_uniform_sphere(rng, velocity);
            VelocityEvent::Refresh
        };
        normalize(velocity);
        *step += 1;
        Ok(StepOutcome {
            eta,
            grad_norm,
            event,
            reflect_prob: Some(p),
        })
    }
}

/// One iteration on an external state.
pub fn bps_step<O: Objective + ?Sized>(
    state: &mut OptimizerState,
    obj: &O,
    cfg: &BpsConfig,
) -> Result<StepOutcome> {
    let mut stepper = Bps::new(obj, cfg)?;
    std::mem::swap(&mut stepper.state, state);
    check_dim(obj.dim(), stepper.state.theta.len())?;
    check_unit(obj.dim(), &stepper.state.velocity)?;
    let outcome = stepper.step();
    std::mem::swap(&mut stepper.state, state);
    outcome
}

pub fn run_bps_with<O, F>(obj: &O, cfg: &BpsConfig, mut observe: F) -> Result<OptimizerState>
where
    O: Objective + ?Sized,
    F: FnMut(&OptimizerState, &StepOutcome) -> Result<()>,
{
    let mut stepper = Bps::new(obj, cfg)?;
    for _ in 0..cfg.steps {
        let outcome = stepper.step()?;
        observe(&stepper.state, &outcome)?;
    }
    Ok(stepper.into_state())
}

pub fn run_bps<O: Objective + ?Sized>(obj: &O, cfg: &BpsConfig) -> Result<RunRecord> {
    run_bps_recorded(obj, cfg, 1, "", 0)
}

pub fn run_bps_recorded<O: Objective + ?Sized>(
    obj: &O,
    cfg: &BpsConfig,
    stride: u64,
    label: &str,
    trial: u64,
) -> Result<RunRecord> {
    let start = Instant::now();
    let mut record = RunRecord::new(RecordHeader {
        algorithm: "bps".into(),
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
    run_bps_with(obj, cfg, |state, out| {
        if record.should_record(state.step) {
            record.steps.push(StepEntry {
                k: state.step,
                theta: state.theta.to_vec(),
                velocity: Some(state.velocity.clone()),
                eta: out.eta,
                batch: None,
                grad_norm: out.grad_norm,
                event: Some(out.event),
                reflect_prob: out.reflect_prob,
                chain: None,
            });
        }
        Ok(())
    })?;
    record.wall_time = start.elapsed();
    Ok(record)
}

/// Settings for comparing the output laws of Poisson SGD and BPS started from
/// the same point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpec {
    pub beta: f64,
    pub epsilon: f64,
    pub steps: u64,
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// BPS extra reflection intensity; `lambda_ref` takes the rest of
    /// `beta * M + 1/epsilon`.
    #[serde(default)]
    pub c_b: f64,
    pub initial_point: Vec<f64>,
    pub initial_velocity: Vec<f64>,
    pub seed: u64,
    #[serde(default = "default_projections")]
    pub projections: usize,
}

fn default_projections() -> usize {
    256
}

#[derive(Debug, Clone)]
pub struct CouplingResult {
    /// Sliced W1 between the two clouds of `theta_K`.
    pub distance: f64,
    /// `4 sqrt(d) K epsilon`.
    pub bound: f64,
    pub poisson_sgd: Vec<Vec<f64>>,
    pub bps: Vec<Vec<f64>>,
}

/// Runs `trials` independent Poisson SGD / BPS pairs from the same initial
/// state and measures the distance between their endpoint clouds.
pub fn coupled_compare<O: Objective + ?Sized>(obj: &O, spec: &CouplingSpec) -> Result<CouplingResult> {
    if spec.trials == 0 {
        return Err(Error::InvalidConfig("coupling needs at least one trial".into()));
    }
    let endpoints: Vec<(Vec<f64>, Vec<f64>)> = (0..spec.trials as u64)
        .into_par_iter()
        .map(|t| {
            let psgd = PoissonSgdConfig {
                beta: spec.beta,
                epsilon: spec.epsilon,
                steps: spec.steps,
                batch_size: spec.batch_size,
                initial_point: spec.initial_point.clone(),
                initial_velocity: spec.initial_velocity.clone(),
                seed: trial_seed(spec.seed, 2 * t),
            };
            let bps = BpsConfig::coupled(
                obj,
                spec.beta,
                spec.epsilon,
                spec.c_b,
                spec.steps,
                spec.initial_point.clone(),
                spec.initial_velocity.clone(),
                trial_seed(spec.seed, 2 * t + 1),
            );
            let a = run_poisson_sgd_with(obj, &psgd, |_, _, _| Ok(()))?;
            let b = run_bps_with(obj, &bps, |_, _| Ok(()))?;
            Ok((a.theta.into_vec(), b.theta.into_vec()))
        })
        .collect::<Result<_>>()?;
    let (poisson_sgd, bps): (Vec<_>, Vec<_>) = endpoints.into_iter().unzip();
    let mut rng = RngStream::new(spec.seed).split(u64::MAX);
    let distance = sliced_wasserstein1(&poisson_sgd, &bps, spec.projections, &mut rng)?;
    let d = obj.dim() as f64;
    Ok(CouplingResult {
        distance,
        bound: 4.0 * d.sqrt() * spec.steps as f64 * spec.epsilon,
        poisson_sgd,
        bps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TorusDomain;
    use crate::objective::{DoubleWell2d, QuadraticBowl};

    #[test]
    fn reflection_probability_examples() {
        assert_eq!(reflection_probability(1.0, -2.0, 1.0, 0.0), 0.0);
        assert!((reflection_probability(1.0, 1.0, 1.0, 0.5) - 0.6).abs() < 1e-15);
        assert!(reflection_probability(1.0, 0.0, 1e-12, 0.5) > 1.0 - 1e-11);
    }

    #[test]
    fn coupled_constructor_satisfies_constraint() {
        let dw = DoubleWell2d::with_default_domain();
        let cfg = BpsConfig::coupled(&dw, 0.01, 0.1, 0.0, 10, vec![0.0, 0.0], vec![1.0, 0.0], 0);
        assert!(cfg.validate(&dw).is_ok());
        assert!((cfg.lambda_ref - (0.01 * dw.grad_norm_bound() + 10.0)).abs() < 1e-9);
        let mut broken = cfg.clone();
        broken.c_b = 1.0;
        assert!(broken.validate(&dw).is_err());
        let mut no_refresh = cfg;
        no_refresh.epsilon = None;
        no_refresh.lambda_ref = 0.0;
        assert!(no_refresh.validate(&dw).is_err());
    }

    #[test]
    fn flat_region_always_refreshes_when_c_b_is_zero() {
        // Constant gradient orthogonal to nothing: use a bowl but beta = 0 so
        // the reflection numerator is c_b = 0.
        let bowl = QuadraticBowl::centered(2, 10.0).unwrap();
        let cfg = BpsConfig::free(0.0, 2.0, 0.0, 2_000, vec![1.0, 1.0], vec![1.0, 0.0], 5);
        let rec = run_bps(&bowl, &cfg).unwrap();
        assert!(rec.steps.iter().all(|s| s.event == Some(VelocityEvent::Refresh)));
    }

    #[test]
    fn zero_steps_and_replay() {
        let bowl = QuadraticBowl::centered(2, 10.0).unwrap();
        let cfg = BpsConfig::free(1.0, 1.0, 0.0, 0, vec![1.0, 1.0], vec![1.0, 0.0], 5);
        assert!(run_bps(&bowl, &cfg).unwrap().steps.is_empty());
        let cfg = BpsConfig { steps: 50, ..cfg };
        let a = run_bps(&bowl, &cfg).unwrap().to_ndjson().unwrap();
        let b = run_bps(&bowl, &cfg).unwrap().to_ndjson().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn external_step_matches_stepper() {
        let bowl = QuadraticBowl::centered(2, 10.0).unwrap();
        let cfg = BpsConfig::free(1.0, 1.0, 0.3, 20, vec![1.0, 1.0], vec![0.0, 1.0], 8);
        let rec = run_bps(&bowl, &cfg).unwrap();
        let mut state =
            OptimizerState::new(bowl.domain(), &cfg.initial_point, &cfg.initial_velocity, cfg.seed).unwrap();
        for entry in &rec.steps {
            bps_step(&mut state, &bowl, &cfg).unwrap();
            assert_eq!(state.theta.coords(), entry.theta.as_slice());
        }
    }

    #[test]
    fn coupling_with_no_steps_has_zero_distance() {
        let bowl = QuadraticBowl::new(TorusDomain::centered(vec![6.0]).unwrap(), vec![vec![0.0]]).unwrap();
        let spec = CouplingSpec {
            beta: 1.0,
            epsilon: 0.1,
            steps: 0,
            trials: 16,
            batch_size: None,
            c_b: 0.0,
            initial_point: vec![1.0],
            initial_velocity: vec![1.0],
            seed: 1,
            projections: 8,
        };
        let res = coupled_compare(&bowl, &spec).unwrap();
        assert_eq!(res.distance, 0.0);
        assert_eq!(res.bound, 0.0);
    }
}
