//! Monte Carlo oracle for Bergomi-type models.
//!
//! The Gaussian driver (Volterra values and Brownian increments of every
//! factor on a uniform grid) is sampled exactly through a Cholesky factor of
//! its covariance; the log-price is then stepped by Euler with left-point
//! variance.
//!
//! Random numbers: paths are grouped in blocks of [`BLOCK_SIZE`] samples.
//! Block `b` draws from `ChaCha8Rng::seed_from_u64(seed)` switched to stream
//! `b`, so results do not depend on how blocks are scheduled and are
//! bit-identical with or without the `parallel` feature.

mod driver;
mod estimators;
mod linalg;
mod paths;

pub use driver::{build_driver_covariance, Driver, DriverCovariance, FactorCovariance, DRIVER_REL_TOL};
pub use estimators::{
    conditional_iv_experiment, convergence_from_bundles, convergence_study, mc_implied_variance, mc_put, silverman_bandwidth,
    conditional_iv_from_bundle, ConditionalIvRow, ConvergenceRow, McEstimate, MIN_EFFECTIVE_SAMPLES,
};
pub use linalg::{CholeskyFactor, SymmetricMatrix};
pub use paths::{simulate_paths, simulate_paths_crn, simulate_with_driver, PathBundle, BLOCK_SIZE};

use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Uniform time grid `t_j = jΔ`, `j = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimGrid {
    horizon: f64,
    n_steps: usize,
}

impl SimGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::domain("simulation grid needs at least 2 steps"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::domain("simulation horizon must be positive"));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn for_model(model: &ModelSpec, n_steps: usize) -> Result<Self> {
        Self::new(model.horizon(), n_steps)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        if j == self.n_steps {
            self.horizon
        } else {
            j as f64 * self.step()
        }
    }
}

/// Sampling controls shared by every simulation entry point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    /// Independent samples: antithetic pairs when `antithetic` is on.
    pub n_paths: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl SimConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self {
            n_paths,
            seed,
            antithetic: true,
        }
    }

    pub fn plain(self) -> Self {
        Self {
            antithetic: false,
            ..self
        }
    }
}
