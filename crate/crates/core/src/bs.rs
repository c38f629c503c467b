//! Black–Scholes primitives in total-variance form.
//!
//! Every price here is undiscounted and parametrized by the total variance
//! `t = σ²T` instead of volatility and maturity separately.

use core::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

const IMPLIED_MAX_ITER: usize = 200;
const IMPLIED_INITIAL_GUESS: f64 = 0.25;
const IMPLIED_MAX_BRACKET: f64 = 1.0e6;

/// Dimensionless total variance `σ²T`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TotalVariance(f64);

impl TotalVariance {
    pub fn new(t: f64) -> Result<Self> {
        if t.is_finite() && t >= 0.0 {
            Ok(Self(t))
        } else {
            Err(Error::domain("total variance must be finite and nonnegative"))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsQuote {
    pub spot: f64,
    pub strike: f64,
    pub total_variance: TotalVariance,
}

impl BsQuote {
    pub fn new(spot: f64, strike: f64, total_variance: f64) -> Result<Self> {
        if !(spot.is_finite() && spot > 0.0) {
            return Err(Error::domain("spot must be positive"));
        }
        if !(strike.is_finite() && strike > 0.0) {
            return Err(Error::domain("strike must be positive"));
        }
        Ok(Self {
            spot,
            strike,
            total_variance: TotalVariance::new(total_variance)?,
        })
    }

    fn t(&self) -> f64 {
        self.total_variance.value()
    }
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * libm::exp(-0.5 * x * x)
}

/// Standard normal distribution function, via `erfc` so both tails keep
/// full relative precision.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `(d_+, d_-)` with `d_± = (log(s/K) ± t/2) / √t`.
pub fn d_pm(quote: &BsQuote) -> Result<(f64, f64)> {
    let t = quote.t();
    if t <= 0.0 {
        return Err(Error::domain("d± requires positive total variance"));
    }
    let sqrt_t = libm::sqrt(t);
    let log_moneyness = libm::log(quote.spot / quote.strike);
    let d_plus = (log_moneyness + 0.5 * t) / sqrt_t;
    Ok((d_plus, d_plus - sqrt_t))
}

/// Undiscounted put price `K Φ(-d_-) - s Φ(-d_+)`; the payoff at `t = 0`.
pub fn put_price(quote: &BsQuote) -> f64 {
    let (s, k) = (quote.spot, quote.strike);
    if quote.t() == 0.0 {
        return (k - s).max(0.0);
    }
    let (d_plus, d_minus) = d_pm(quote).expect("positive total variance");
    let price = k * norm_cdf(-d_minus) - s * norm_cdf(-d_plus);
    price.clamp((k - s).max(0.0), k)
}

/// Call price by put-call parity.
pub fn call_price(quote: &BsQuote) -> f64 {
    put_price(quote) + quote.spot - quote.strike
}

/// `∂p/∂t = K φ(-d_-) / (2√t)`, the total-variance theta of the put
/// (identical for the call).
pub fn dp_dt(quote: &BsQuote) -> Result<f64> {
    let (_, d_minus) = d_pm(quote)?;
    Ok(quote.strike * norm_pdf(d_minus) / (2.0 * libm::sqrt(quote.t())))
}

/// Same quantity as [`dp_dt`] written with the spot-side density,
/// `s φ(-d_+) / (2√t)`.
pub fn dp_dt_spot_form(quote: &BsQuote) -> Result<f64> {
    let (d_plus, _) = d_pm(quote)?;
    Ok(quote.spot * norm_pdf(d_plus) / (2.0 * libm::sqrt(quote.t())))
}

/// Time value of the put, `p - (K - s)^+`, computed from the
/// out-of-the-money side so it keeps relative precision when tiny.
fn time_value(spot: f64, strike: f64, t: f64) -> f64 {
    let q = BsQuote {
        spot,
        strike,
        total_variance: TotalVariance(t),
    };
    let (d_plus, d_minus) = d_pm(&q).expect("positive total variance");
    let v = if spot >= strike {
        strike * norm_cdf(-d_minus) - spot * norm_cdf(-d_plus)
    } else {
        spot * norm_cdf(d_plus) - strike * norm_cdf(d_minus)
    };
    v.max(0.0)
}

/// Inverts [`put_price`] in total variance.
///
/// Solves `log w(t) = log(p - (K - s)^+)` for the time value `w`, so the
/// target is matched in relative terms however small it is. Newton steps
/// use `w'/w = (∂p/∂t)/w`; whenever a step leaves the current bracket, or
/// `w` underflows, the iteration falls back to bisection.
pub fn implied_total_variance(price: f64, spot: f64, strike: f64) -> Result<TotalVariance> {
    BsQuote::new(spot, strike, 0.0)?;
    let intrinsic = (strike - spot).max(0.0);
    if !(price.is_finite() && price > intrinsic && price < strike) {
        return Err(Error::domain(alloc::format!(
            "put price {price} outside no-arbitrage bounds ({intrinsic}, {strike})"
        )));
    }
    let target = price - intrinsic;
    let log_target = libm::log(target);

    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while time_value(spot, strike, hi) < target {
        lo = hi;
        hi *= 2.0;
        if hi > IMPLIED_MAX_BRACKET {
            return Err(Error::NoConvergence {
                iterations: 0,
                last: hi,
            });
        }
    }

    let mut t = IMPLIED_INITIAL_GUESS;
    if t <= lo || t >= hi {
        t = 0.5 * (lo + hi);
    }
    let mut converged = false;
    for _ in 0..IMPLIED_MAX_ITER {
        let w = time_value(spot, strike, t);
        if w == target {
            return Ok(TotalVariance(t));
        }
        if w < target {
            lo = t;
        } else {
            hi = t;
        }
        let quote = BsQuote {
            spot,
            strike,
            total_variance: TotalVariance(t),
        };
        let slope = dp_dt(&quote).unwrap_or(0.0);
        let next = if w > 0.0 && slope > 0.0 {
            let newton = t - (libm::log(w) - log_target) * w / slope;
            if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            }
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - t).abs();
        t = next;
        if step <= 1e-15 * t || hi - lo <= 4.0 * f64::EPSILON * hi {
            converged = true;
            break;
        }
    }
    let w = time_value(spot, strike, t);
    if converged || (w / target - 1.0).abs() <= 1e-10 {
        Ok(TotalVariance(t))
    } else {
        Err(Error::NoConvergence {
            iterations: IMPLIED_MAX_ITER,
            last: t,
        })
    }
}
