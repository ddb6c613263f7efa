//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::TorusDomain;
use crate::error::{Error, Result};
use crate::objective::{
    DoubleWell1d, DoubleWell2d, LinRegData, LinRegSynthetic, Objective, QuadraticBowl,
};

/// Which built-in objective to build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    #[serde(rename = "double_well_2d")]
    DoubleWell2d,
    #[serde(rename = "double_well_1d")]
    DoubleWell1d,
    QuadraticBowl {
        dim: usize,
        /// One center per sample; a single center at the origin when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        centers: Option<Vec<Vec<f64>>>,
    },
    LinregSynthetic {
        n: usize,
        d: usize,
        noise: f64,
        /// Generator seed; the experiment seed when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data_seed: Option<u64>,
        /// Load `{seed, n, d, noise, X, y}` from this file instead of generating.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data_file: Option<PathBuf>,
    },
}

impl ObjectiveSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::DoubleWell2d => "double_well_2d",
            Self::DoubleWell1d => "double_well_1d",
            Self::QuadraticBowl { .. } => "quadratic_bowl",
            Self::LinregSynthetic { .. } => "linreg_synthetic",
        }
    }

    pub fn default_domain(&self) -> TorusDomain {
        match self {
            Self::DoubleWell2d => DoubleWell2d::default_domain(),
            Self::DoubleWell1d => DoubleWell1d::default_domain(),
            Self::QuadraticBowl { dim, .. } => {
                TorusDomain::centered(vec![10.0; *dim]).expect("valid domain")
            }
            Self::LinregSynthetic { d, .. } => LinRegSynthetic::default_domain(*d),
        }
    }

    /// Builds the objective on `domain` (or its default). `seed` stands in for
    /// a missing linreg `data_seed`.
    pub fn build(&self, domain: Option<&TorusDomain>, seed: u64) -> Result<Box<dyn Objective>> {
        let domain = domain.cloned().unwrap_or_else(|| self.default_domain());
        Ok(match self {
            Self::DoubleWell2d => Box::new(DoubleWell2d::new(domain)?),
            Self::DoubleWell1d => Box::new(DoubleWell1d::new(domain)?),
            Self::QuadraticBowl { dim, centers } => {
                let centers = centers.clone().unwrap_or_else(|| vec![vec![0.0; *dim]]);
                Box::new(QuadraticBowl::new(domain, centers)?)
            }
            Self::LinregSynthetic {
                n,
                d,
                noise,
                data_seed,
                data_file,
            } => {
                let data = match data_file {
                    Some(path) => LinRegData::load(path)?,
                    None => LinRegData::generate(*n, *d, *noise, data_seed.unwrap_or(seed))?,
                };
                Box::new(LinRegSynthetic::new(domain, data)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveInfo {
    pub name: &'static str,
    pub dim: String,
    pub description: &'static str,
}

pub fn list_objectives() -> Vec<ObjectiveInfo> {
    vec![
        ObjectiveInfo {
            name: "double_well_2d",
            dim: "2".into(),
            description: "x^4 - 4x^3 - 36x^2 + y^2 + 864; local min (-3,0), global min (6,0)",
        },
        ObjectiveInfo {
            name: "double_well_1d",
            dim: "1".into(),
            description: "x^4 - 4x^3 - 36x^2 + 864; local min -3, global min 6",
        },
        ObjectiveInfo {
            name: "quadratic_bowl",
            dim: "any".into(),
            description: "mean of |theta - c_i|^2 / 2 over centers c_i",
        },
        ObjectiveInfo {
            name: "linreg_synthetic",
            dim: "any".into(),
            description: "squared loss on generated linear-regression data",
        },
    ]
}

/// Poisson SGD settings inside an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonSgdParams {
    pub beta: f64,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
}

/// Plain SGD (`temperature = 0`) or SGLD settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdParams {
    pub learning_rate: f64,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    PoissonSgd,
    Bps,
}

/// How the law of `theta_K` is estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Protocol {
    /// `trials` independent chains, each observed at every checkpoint.
    #[default]
    ManyChains,
    /// One chain; the sample at checkpoint K is every `thin`-th state in
    /// `[burn_in, K]`. Cheaper, but the states are correlated and describe a
    /// time average rather than the law at step K.
    LongChain { burn_in: u64, thin: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    /// Basin classification of endpoints from a start near the local minimum.
    Escape {
        poisson_sgd: PoissonSgdParams,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sgd: Option<SgdParams>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sgld: Option<SgdParams>,
        steps: u64,
        initial_point: Vec<f64>,
        /// Uniform on the sphere per trial when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_velocity: Option<Vec<f64>>,
        global_min: Vec<f64>,
        local_min: Vec<f64>,
        #[serde(default = "default_radius")]
        radius: f64,
    },
    /// Empirical law at checkpoints against the grid-normalized stationary density.
    Stationarity {
        sampler: SamplerKind,
        beta: f64,
        epsilon: f64,
        /// BPS reflection constant; refreshment takes the rest of `beta M + 1/epsilon`.
        #[serde(default)]
        c_b: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch_size: Option<usize>,
        checkpoints: Vec<u64>,
        initial_point: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_velocity: Option<Vec<f64>>,
        #[serde(default)]
        protocol: Protocol,
        #[serde(default = "default_bins")]
        bins: usize,
        #[serde(default = "default_oracle_samples")]
        oracle_samples: usize,
        #[serde(default = "default_projections")]
        projections: usize,
    },
    /// Mean final empirical risk per inverse temperature.
    BetaSweep {
        betas: Vec<f64>,
        epsilon: f64,
        steps: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch_size: Option<usize>,
        /// Uniform over the domain per trial when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_point: Option<Vec<f64>>,
        #[serde(default = "default_bins")]
        bins: usize,
    },
    /// Poisson SGD against BPS with matched constants.
    Coupling {
        beta: f64,
        epsilon: f64,
        steps: u64,
        #[serde(default)]
        c_b: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch_size: Option<usize>,
        initial_point: Vec<f64>,
        initial_velocity: Vec<f64>,
        #[serde(default = "default_projections")]
        projections: usize,
    },
    /// Train and held-out risk per training-set size on linear regression.
    Generalization {
        sizes: Vec<usize>,
        n_test: usize,
        poisson_sgd: PoissonSgdParams,
        steps: u64,
    },
    /// Plain SGD or SGLD runs.
    Baseline {
        sgd: SgdParams,
        steps: u64,
        initial_point: Vec<f64>,
    },
}

fn default_radius() -> f64 {
    1.5
}

fn default_bins() -> usize {
    64
}

fn default_oracle_samples() -> usize {
    10_000
}

fn default_projections() -> usize {
    256
}

fn default_trials() -> usize {
    1
}

fn default_stride() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub objective: ObjectiveSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<TorusDomain>,
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Every `record_stride`-th step of each trajectory is persisted.
    #[serde(default = "default_stride")]
    pub record_stride: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn kind(&self) -> &'static str {
        match self.experiment {
            Experiment::Escape { .. } => "escape",
            Experiment::Stationarity { .. } => "stationarity",
            Experiment::BetaSweep { .. } => "beta_sweep",
            Experiment::Coupling { .. } => "coupling",
            Experiment::Generalization { .. } => "generalization",
            Experiment::Baseline { .. } => "baseline",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if let Some(d) = &self.domain {
            if d.dim() != self.objective.default_domain().dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.objective.default_domain().dim(),
                    found: d.dim(),
                });
            }
        }
        match &self.experiment {
            Experiment::Stationarity { checkpoints, .. } => {
                if checkpoints.is_empty() || checkpoints.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidConfig(
                        "checkpoints must be non-empty and strictly increasing".into(),
                    ));
                }
            }
            Experiment::BetaSweep { betas, .. } if betas.is_empty() => {
                return Err(Error::InvalidConfig("beta sweep needs at least one beta".into()));
            }
            Experiment::Generalization { sizes, .. } => {
                if !matches!(self.objective, ObjectiveSpec::LinregSynthetic { .. }) {
                    return Err(Error::InvalidConfig(
                        "generalization runs on linreg_synthetic".into(),
                    ));
                }
                if sizes.is_empty() {
                    return Err(Error::InvalidConfig("need at least one training size".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(self)?)))
    }

    pub fn build_objective(&self) -> Result<Box<dyn Objective>> {
        self.objective.build(self.domain.as_ref(), self.seed)
    }
}
