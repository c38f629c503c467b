use alloc::vec::Vec;

use super::paths::{simulate_paths, simulate_paths_crn, PathBundle};
use super::{SimConfig, SimGrid};
use crate::bs::{dp_dt, implied_total_variance, BsQuote};
use crate::error::{Error, Result};
use crate::expansion::{implied_variance_expansion, put_expansion};
use crate::model::{expansion_inputs, ModelSpec};

/// Below this many effective samples a regression point is flagged.
pub const MIN_EFFECTIVE_SAMPLES: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    /// `sample_std / √n_paths`.
    pub std_error: f64,
    /// Independent samples behind the estimate (antithetic pairs count once).
    pub n_paths: usize,
    pub seed: u64,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
        let std = if n > 1 { libm::sqrt(ss / (n - 1) as f64) } else { f64::NAN };
        Self {
            mean,
            std_error: std / libm::sqrt(n as f64),
            n_paths: n,
            seed,
        }
    }
}

pub fn mc_put(model: &ModelSpec, strike: f64, grid: &SimGrid, config: &SimConfig) -> Result<McEstimate> {
    check_strike(strike)?;
    Ok(simulate_paths(model, grid, config)?.put(strike))
}

/// Implied total variance of the simulated put price; the standard error is
/// carried through by the delta method, `se_p / ∂p/∂t`.
///
/// A price outside the no-arbitrage bounds is a domain error; callers treat
/// it as a flagged, omitted point.
pub fn mc_implied_variance(bundle: &PathBundle, strike: f64) -> Result<McEstimate> {
    check_strike(strike)?;
    let price = bundle.put(strike);
    let t = implied_total_variance(price.mean, bundle.spot, strike)?.value();
    let slope = dp_dt(&BsQuote::new(bundle.spot, strike, t)?)?;
    Ok(McEstimate {
        mean: t,
        std_error: price.std_error / slope,
        ..price
    })
}

fn check_strike(strike: f64) -> Result<()> {
    if strike > 0.0 && strike.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("strike must be positive"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub p_mc: McEstimate,
    /// First-order expansion price.
    pub p_exp: f64,
    pub err: f64,
    /// `None` at ε = 0.
    pub err_over_eps: Option<f64>,
    /// `err / previous err`; `None` on the first row.
    pub ratio: Option<f64>,
}

/// Simulated put against the expansion along a decreasing ε list, with the
/// same Gaussian draws reused for every ε.
pub fn convergence_study(
    model: &ModelSpec,
    strike: f64,
    eps_list: &[f64],
    grid: &SimGrid,
    config: &SimConfig,
) -> Result<Vec<ConvergenceRow>> {
    check_strike(strike)?;
    if eps_list.is_empty() {
        return Err(Error::domain("eps list is empty"));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::domain("eps list must be strictly decreasing"));
    }
    let bundles = simulate_paths_crn(model, eps_list, grid, config)?;
    convergence_from_bundles(model, strike, &bundles)
}

/// The rows of [`convergence_study`] for bundles simulated elsewhere, in
/// their given order.
pub fn convergence_from_bundles(
    model: &ModelSpec,
    strike: f64,
    bundles: &[PathBundle],
) -> Result<Vec<ConvergenceRow>> {
    check_strike(strike)?;
    let inputs = expansion_inputs(model)?;
    let mean = inputs.conditional_mean();
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(bundles.len());
    for bundle in bundles {
        let eps = bundle.eps;
        let p_mc = bundle.put(strike);
        let p_exp = put_expansion(&inputs.with_eps(eps)?, &mean, strike)?.form_a;
        let err = (p_mc.mean - p_exp).abs();
        rows.push(ConvergenceRow {
            eps,
            p_mc,
            p_exp,
            err,
            err_over_eps: (eps > 0.0).then(|| err / eps),
            ratio: rows.last().map(|prev| err / prev.err),
        });
    }
    Ok(rows)
}

/// Rule-of-thumb bandwidth `1.06 σ̂ N^{-1/5}` on the log-price sample.
pub fn silverman_bandwidth(bundle: &PathBundle) -> f64 {
    let x = &bundle.terminal_log_price;
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    1.06 * libm::sqrt(var) * libm::pow(n, -0.2)
}

/// Gaussian-kernel regression of `∫V` on `log S_T` at `log_strike`:
/// `(estimate, standard error, effective sample size)`.
///
/// The standard error treats paths as independent, which antithetic pairs
/// are not; it is a guide, not a confidence bound.
fn kernel_regression(bundle: &PathBundle, log_strike: f64, bandwidth: f64) -> (f64, f64, f64) {
    let weight = |x: f64| {
        if bandwidth.is_infinite() {
            1.0
        } else {
            let u = (x - log_strike) / bandwidth;
            libm::exp(-0.5 * u * u)
        }
    };
    let (mut sw, mut sw2, mut swy) = (0.0, 0.0, 0.0);
    for (&x, &y) in bundle.terminal_log_price.iter().zip(&bundle.integrated_variance) {
        let w = weight(x);
        sw += w;
        sw2 += w * w;
        swy += w * y;
    }
    if sw == 0.0 {
        return (f64::NAN, f64::NAN, 0.0);
    }
    let est = swy / sw;
    let mut resid = 0.0;
    for (&x, &y) in bundle.terminal_log_price.iter().zip(&bundle.integrated_variance) {
        let w = weight(x);
        resid += w * w * (y - est) * (y - est);
    }
    (est, libm::sqrt(resid) / sw, sw * sw / sw2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalIvRow {
    pub strike: f64,
    /// Kernel estimate of `E[∫_0^T V dt | S_T = K]`.
    pub regression_iv: f64,
    pub regression_std_error: f64,
    /// Log-price bandwidth actually used.
    pub bandwidth: f64,
    pub effective_samples: f64,
    /// `None` when the simulated price fell outside the no-arbitrage bounds.
    pub mc_iv: Option<McEstimate>,
    pub expansion_iv: f64,
    pub flagged: bool,
}

/// Conditional expectation of integrated variance given the terminal price,
/// set beside the simulated and expanded implied total variances.
///
/// `bandwidth` is in log-price; `None` picks [`silverman_bandwidth`], and
/// `f64::INFINITY` gives the unconditional mean at every strike.
pub fn conditional_iv_experiment(
    model: &ModelSpec,
    strikes: &[f64],
    bandwidth: Option<f64>,
    grid: &SimGrid,
    config: &SimConfig,
) -> Result<Vec<ConditionalIvRow>> {
    let bundle = simulate_paths(model, grid, config)?;
    conditional_iv_from_bundle(model, &bundle, strikes, bandwidth)
}

pub fn conditional_iv_from_bundle(
    model: &ModelSpec,
    bundle: &PathBundle,
    strikes: &[f64],
    bandwidth: Option<f64>,
) -> Result<Vec<ConditionalIvRow>> {
    let h = match bandwidth {
        None => silverman_bandwidth(bundle),
        Some(h) if h > 0.0 && !h.is_nan() => h,
        Some(_) => return Err(Error::domain("bandwidth must be positive")),
    };
    let inputs = expansion_inputs(&model.with_eps(bundle.eps)?)?;
    let mean = inputs.conditional_mean();
    strikes
        .iter()
        .map(|&strike| {
            check_strike(strike)?;
            let (regression_iv, regression_std_error, effective_samples) =
                kernel_regression(bundle, libm::log(strike), h);
            let mc_iv = mc_implied_variance(bundle, strike).ok();
            let expansion_iv = implied_variance_expansion(&inputs, &mean, strike)?.implied_total_variance;
            Ok(ConditionalIvRow {
                strike,
                regression_iv,
                regression_std_error,
                bandwidth: h,
                effective_samples,
                mc_iv,
                expansion_iv,
                flagged: effective_samples < MIN_EFFECTIVE_SAMPLES || mc_iv.is_none(),
            })
        })
        .collect()
}
