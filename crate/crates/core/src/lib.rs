//! Poisson SGD and the discrete bouncy particle sampler on flat tori.
//!
//! [`poisson_sgd`] runs SGD with random, gradient-dependent learning rates and
//! reflected velocities. [`bps`] runs the full-batch bouncy particle chain it
//! couples to. [`stationary`] gives the closed-form stationary density of
//! Poisson SGD, and [`metrics`] the distances used to compare samples against
//! it. [`harness`] drives configured experiments end to end.

pub mod baselines;
pub mod bps;
pub mod checks;
pub mod domain;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod objective;
pub mod poisson_sgd;
pub mod record;
pub mod sampler;
pub mod stationary;

pub use bps::{run_bps, BpsConfig};
pub use domain::{Point, TorusDomain};
pub use error::{Error, Result};
pub use objective::Objective;
pub use poisson_sgd::{run_poisson_sgd, PoissonSgdConfig};
pub use stationary::StationaryDensity;
