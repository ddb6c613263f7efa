//! Constant-step SGD and Langevin-noised SGD on the torus, used as reference
//! points for the escape and generalization experiments.

use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::Point;
use crate::error::{check_dim, Error, Result};
use crate::linalg::norm;
use crate::objective::{batch_gradient_into, sample_minibatch, MiniBatch, Objective};
use crate::record::{RecordHeader, RunRecord, StepEntry};
use crate::sampler::{RngStream, RNG_ALGORITHM};

/// `theta <- wrap(theta - lr ∇L_I(theta) + sqrt(2 lr T) xi)`, `xi` standard normal.
/// With `temperature = 0` this is plain SGD and consumes no Gaussian draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    #[serde(default)]
    pub temperature: f64,
    pub steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    pub initial_point: Vec<f64>,
    pub seed: u64,
}

impl SgdConfig {
    pub fn sgd(learning_rate: f64, steps: u64, initial_point: Vec<f64>, seed: u64) -> Self {
        Self {
            learning_rate,
            temperature: 0.0,
            steps,
            batch_size: None,
            initial_point,
            seed,
        }
    }

    pub fn langevin(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_batch_size(mut self, m: usize) -> Self {
        self.batch_size = Some(m);
        self
    }

    pub fn validate<O: Objective + ?Sized>(&self, obj: &O) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig("temperature must be finite and >= 0".into()));
        }
        let n = obj.n_samples();
        if let Some(m) = self.batch_size {
            if m == 0 || m > n {
                return Err(Error::InvalidBatchSize { m, n });
            }
        }
        check_dim(obj.dim(), self.initial_point.len())
    }
}

/// Runs the baseline, calling `observe(step, theta, grad_norm)` after every step.
pub fn run_sgd_with<O, F>(obj: &O, cfg: &SgdConfig, mut observe: F) -> Result<Point>
where
    O: Objective + ?Sized,
    F: FnMut(u64, &Point, f64) -> Result<()>,
{
    cfg.validate(obj)?;
    let domain = obj.domain();
    let d = obj.dim();
    let n = obj.n_samples();
    let m = cfg.batch_size.unwrap_or(n);
    let noise = (2.0 * cfg.learning_rate * cfg.temperature).sqrt();
    let mut rng = RngStream::new(cfg.seed);
    let mut theta = domain.wrap(&cfg.initial_point)?;
    let mut batch = MiniBatch::full(n);
    let mut grad = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    for k in 1..=cfg.steps {
        if m < n {
            batch = sample_minibatch(n, m, &mut rng)?;
        }
        batch_gradient_into(obj, batch.indices(), &theta, &mut grad, &mut scratch);
        let coords = theta.coords_mut();
        for (t, g) in coords.iter_mut().zip(&grad) {
            *t -= cfg.learning_rate * g;
            if noise > 0.0 {
                let xi: f64 = StandardNormal.sample(&mut rng);
                *t += noise * xi;
            }
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig(format!("iterate diverged at step {k}")));
        }
        domain.wrap_in_place(coords);
        observe(k, &theta, norm(&grad))?;
    }
    Ok(theta)
}

pub fn run_sgd<O: Objective + ?Sized>(obj: &O, cfg: &SgdConfig) -> Result<Point> {
    run_sgd_with(obj, cfg, |_, _, _| Ok(()))
}

pub fn run_sgd_recorded<O: Objective + ?Sized>(
    obj: &O,
    cfg: &SgdConfig,
    stride: u64,
    label: &str,
    trial: u64,
) -> Result<RunRecord> {
    let start = Instant::now();
    let algorithm = if cfg.temperature > 0.0 { "sgld" } else { "sgd" };
    let mut record = RunRecord::new(RecordHeader {
        algorithm: algorithm.into(),
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
    run_sgd_with(obj, cfg, |k, theta, grad_norm| {
        if record.should_record(k) {
            record.steps.push(StepEntry {
                k,
                theta: theta.to_vec(),
                velocity: None,
                eta: cfg.learning_rate,
                batch: None,
                grad_norm,
                event: None,
                reflect_prob: None,
                chain: None,
            });
        }
        Ok(())
    })?;
    record.wall_time = start.elapsed();
    Ok(record)
}
