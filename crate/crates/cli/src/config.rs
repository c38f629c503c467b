//! TOML run configuration.
//!
//! ```toml
//! spot = 100.0
//! horizon = 1.0
//! eps = 0.2
//!
//! [curve]
//! type = "flat"            # or "piecewise_constant" with breakpoints, values
//! value = 0.04
//!
//! [[factors]]
//! rho = -0.7
//! kernel = { type = "power", a = 1.0, H = 0.1 }
//! # kernel = { type = "exponential", a = 1.0, b = 2.0 }
//! # kernel = { type = "tabulated", table = { times = [...], values = [...] } }
//!
//! [conditional_mean]       # optional; default is the Gaussian-limit E[XY] x
//! type = "polynomial"
//! coefficients = [0.0, -0.03]
//!
//! [run]
//! strikes = [90.0, 100.0, 110.0]
//! eps_list = [0.4, 0.2, 0.1, 0.05]
//! n_paths = 100000         # antithetic pairs
//! n_steps = 200
//! seed = 42
//! antithetic = true
//! bandwidth = 0.05         # log-price; omit for Silverman's rule
//! validate_strike = 100.0  # defaults to spot
//! ```

use std::path::Path;

use serde::Deserialize;
use svexp_core::model::{ConditionalMean, CustomMean, Factor, ForwardVarianceCurve, Kernel, ModelSpec};

use crate::error::{CliError, CliResult};

pub const DEFAULT_N_PATHS: usize = 100_000;
pub const DEFAULT_N_STEPS: usize = 200;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    spot: f64,
    horizon: f64,
    eps: f64,
    curve: RawCurve,
    factors: Vec<RawFactor>,
    conditional_mean: Option<RawMean>,
    #[serde(default)]
    run: RawRun,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawCurve {
    Flat { value: f64 },
    PiecewiseConstant { breakpoints: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFactor {
    rho: f64,
    kernel: RawKernel,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawKernel {
    Exponential {
        a: f64,
        b: f64,
    },
    Power {
        a: f64,
        #[serde(rename = "H")]
        hurst: f64,
    },
    Tabulated {
        table: RawTable,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    times: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawMean {
    Polynomial { coefficients: Vec<f64> },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    strikes: Option<Vec<f64>>,
    eps_list: Option<Vec<f64>>,
    n_paths: Option<usize>,
    n_steps: Option<usize>,
    seed: Option<u64>,
    antithetic: Option<bool>,
    bandwidth: Option<f64>,
    validate_strike: Option<f64>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub strikes: Option<Vec<f64>>,
    pub eps_list: Option<Vec<f64>>,
    pub n_paths: Option<usize>,
    pub n_steps: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelSpec,
    /// Replaces the Gaussian-limit conditional mean in the expansion
    /// commands; the Monte Carlo commands always use the model itself.
    pub custom_mean: Option<CustomMean>,
    pub strikes: Option<Vec<f64>>,
    pub eps_list: Option<Vec<f64>>,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub antithetic: bool,
    pub bandwidth: Option<f64>,
    pub validate_strike: f64,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &Overrides) -> CliResult<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(parse_error)?;
        build(raw, overrides)
    }

    pub fn mean_override(&self) -> Option<ConditionalMean> {
        self.custom_mean.clone().map(ConditionalMean::Custom)
    }

    pub fn strikes(&self) -> CliResult<&[f64]> {
        self.strikes
            .as_deref()
            .ok_or_else(|| CliError::config("run.strikes", "required by this command"))
    }

    pub fn eps_list(&self) -> CliResult<&[f64]> {
        self.eps_list
            .as_deref()
            .ok_or_else(|| CliError::config("run.eps_list", "required by this command"))
    }
}

/// Names the key when the TOML layer reports one (`missing field `x``,
/// `unknown field `x``, ...).
fn parse_error(e: toml::de::Error) -> CliError {
    let msg = e.message().to_string();
    let key = msg
        .split('`')
        .nth(1)
        .filter(|k| !k.is_empty())
        .unwrap_or("config")
        .to_string();
    let location = e
        .span()
        .map(|s| format!(" (byte offset {})", s.start))
        .unwrap_or_default();
    CliError::config(key, format!("{msg}{location}"))
}

fn build(raw: RawConfig, ov: &Overrides) -> CliResult<RunConfig> {
    let curve = match raw.curve {
        RawCurve::Flat { value } => ForwardVarianceCurve::flat(value),
        RawCurve::PiecewiseConstant { breakpoints, values } => {
            ForwardVarianceCurve::piecewise_constant(breakpoints, values)
        }
    }
    .map_err(|e| CliError::config("curve", e))?;

    let factors = raw
        .factors
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            let key = format!("factors[{i}].kernel");
            let kernel = match f.kernel {
                RawKernel::Exponential { a, b } => Kernel::exponential(a, b),
                RawKernel::Power { a, hurst } => Kernel::power(a, hurst),
                RawKernel::Tabulated { table } => Kernel::tabulated(table.times, table.values),
            }
            .map_err(|e| CliError::config(key, e))?;
            if !(f.rho.is_finite() && f.rho.abs() <= 1.0) {
                return Err(CliError::config(format!("factors[{i}].rho"), "must lie in [-1, 1]"));
            }
            Ok(Factor::new(f.rho, kernel))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let model_key = if factors.is_empty() { "factors" } else { "model" };
    let model = ModelSpec::new(raw.spot, raw.horizon, raw.eps, factors, curve)
        .map_err(|e| CliError::config(model_key, e))?;

    let custom_mean = raw
        .conditional_mean
        .map(|RawMean::Polynomial { coefficients }| CustomMean::polynomial(coefficients))
        .transpose()
        .map_err(|e| CliError::config("conditional_mean.coefficients", e))?;

    let run = raw.run;
    let strikes = ov.strikes.clone().or(run.strikes);
    if let Some(ks) = &strikes {
        if ks.is_empty() || ks.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(CliError::config("run.strikes", "need at least one positive strike"));
        }
    }
    let eps_list = ov.eps_list.clone().or(run.eps_list);
    if let Some(es) = &eps_list {
        if es.is_empty() || es.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(CliError::config("run.eps_list", "need nonnegative eps values"));
        }
        if es.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(CliError::config("run.eps_list", "must be strictly decreasing"));
        }
    }
    let n_paths = ov.n_paths.or(run.n_paths).unwrap_or(DEFAULT_N_PATHS);
    if n_paths < 2 {
        return Err(CliError::config("run.n_paths", "must be at least 2"));
    }
    let n_steps = ov.n_steps.or(run.n_steps).unwrap_or(DEFAULT_N_STEPS);
    if n_steps < 2 {
        return Err(CliError::config("run.n_steps", "must be at least 2"));
    }
    if let Some(h) = run.bandwidth {
        if !(h > 0.0) {
            return Err(CliError::config("run.bandwidth", "must be positive"));
        }
    }
    let validate_strike = run.validate_strike.unwrap_or(model.spot());
    if !(validate_strike.is_finite() && validate_strike > 0.0) {
        return Err(CliError::config("run.validate_strike", "must be positive"));
    }
    Ok(RunConfig {
        model,
        custom_mean,
        strikes,
        eps_list,
        n_paths,
        n_steps,
        seed: ov.seed.or(run.seed).unwrap_or(DEFAULT_SEED),
        antithetic: run.antithetic.unwrap_or(true),
        bandwidth: run.bandwidth,
        validate_strike,
    })
}
