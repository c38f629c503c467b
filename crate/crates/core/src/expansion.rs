//! First-order expansion of prices, implied variance and skew in the
//! vol-of-vol parameter `ε`.
//!
//! Everything is driven by the signed density
//!
//! ```text
//! φ^ε(x) = φ(x) + ε/(2√v) (m φ)'(x) + ε/(2v) (m φ)''(x),   m(x) = E[Y | X = x],
//! ```
//!
//! against which `f(S_0 exp{√v x - v/2})` is integrated. For puts and
//! digitals the two correction terms integrate in closed form.

use alloc::vec::Vec;

use crate::bs::{d_pm, dp_dt, norm_cdf, norm_pdf, put_price, BsQuote};
use crate::error::{Error, Result};
use crate::model::{ConditionalMean, ExpansionInputs};
use crate::quadrature::{integrate_gaussian_weighted, QuadResult, GAUSSIAN_TRUNCATION};

/// Relative tolerance of the Gaussian-weighted payoff quadrature.
pub const PAYOFF_REL_TOL: f64 = 1e-9;

const DIAGNOSTIC_POINTS: usize = 4801;

/// The expanded density `φ^ε`. It integrates to one but may dip below zero
/// in the tails when `ε |E[XY]|` is large; nothing here clamps it.
#[derive(Debug, Clone)]
pub struct ExpandedDensity {
    inputs: ExpansionInputs,
    mean: ConditionalMean,
}

impl ExpandedDensity {
    pub fn new(inputs: ExpansionInputs, mean: ConditionalMean) -> Self {
        Self { inputs, mean }
    }

    pub fn inputs(&self) -> &ExpansionInputs {
        &self.inputs
    }

    pub fn mean(&self) -> &ConditionalMean {
        &self.mean
    }

    /// `φ^ε(x) / φ(x)`.
    ///
    /// For the affine mean `m(x) = c x` the derivative terms are Hermite
    /// polynomials: `(xφ)' = (1 - x²)φ` and `(xφ)'' = (x³ - 3x)φ`.
    pub fn weight(&self, x: f64) -> f64 {
        let ExpansionInputs { v_eps, eps, .. } = self.inputs;
        let first = eps / (2.0 * libm::sqrt(v_eps));
        let second = eps / (2.0 * v_eps);
        match &self.mean {
            ConditionalMean::Affine { exy } => {
                1.0 + first * exy * (1.0 - x * x) + second * exy * (x * x * x - 3.0 * x)
            }
            ConditionalMean::Custom(c) => {
                let (m, dm, d2m) = (c.value(x), c.derivative(x), c.second_derivative(x));
                1.0 + first * (dm - x * m) + second * (d2m - 2.0 * x * dm + (x * x - 1.0) * m)
            }
        }
    }

    pub fn at(&self, x: f64) -> f64 {
        norm_pdf(x) * self.weight(x)
    }

    /// Smallest value of `φ^ε` on an even grid over `|x| ≤ 12`.
    pub fn min_over_window(&self) -> f64 {
        let step = 2.0 * GAUSSIAN_TRUNCATION / (DIAGNOSTIC_POINTS - 1) as f64;
        (0..DIAGNOSTIC_POINTS)
            .map(|i| self.at(-GAUSSIAN_TRUNCATION + i as f64 * step))
            .fold(f64::INFINITY, f64::min)
    }

    /// Terminal price `S_0 exp{√v x - v/2}` attached to the standardized
    /// variable `x`.
    pub fn terminal_price(&self, x: f64) -> f64 {
        let v = self.inputs.v_eps;
        self.inputs.spot * libm::exp(libm::sqrt(v) * x - 0.5 * v)
    }

    /// Inverse of [`terminal_price`](Self::terminal_price).
    pub fn standardized(&self, price: f64) -> f64 {
        let v = self.inputs.v_eps;
        (libm::log(price / self.inputs.spot) + 0.5 * v) / libm::sqrt(v)
    }
}

pub fn expanded_density_at(density: &ExpandedDensity, x: f64) -> f64 {
    density.at(x)
}

/// `∫ f(S_0 exp{√v x - v/2}) φ^ε(x) dx` by Gaussian-weighted quadrature.
///
/// `price_kinks` are terminal prices where `f` is not smooth (strikes);
/// they become panel boundaries. `f` must be bounded: price calls through
/// parity.
pub fn expected_payoff<F: Fn(f64) -> f64>(
    density: &ExpandedDensity,
    payoff: F,
    price_kinks: &[f64],
) -> Result<QuadResult> {
    let kinks: Vec<f64> = price_kinks
        .iter()
        .filter(|k| **k > 0.0)
        .map(|&k| density.standardized(k))
        .collect();
    integrate_gaussian_weighted(
        |x| payoff(density.terminal_price(x)) * density.weight(x),
        &kinks,
        PAYOFF_REL_TOL,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PutExpansionReport {
    pub strike: f64,
    /// `p_K(S_0, v)`.
    pub leading: f64,
    /// `ε/(2√v) K m(-d_-) φ(-d_-)`.
    pub correction: f64,
    /// Leading term plus the density-form correction.
    pub form_a: f64,
    /// `p_K(S_0, v) + ε ∂p_K/∂t(S_0, v) m(-d_-)`.
    pub form_b: f64,
    /// `p_K(S_0, v + ε m(-d_-))`.
    pub form_c: f64,
    /// `v + ε m(-d_-)`, the argument of `form_c`.
    pub equivalent_variance: f64,
}

fn check_strike(strike: f64) -> Result<()> {
    if strike > 0.0 && strike.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("strike must be positive"))
    }
}

/// `-d_-(S_0, v)` for the strike: the standardized point where the put
/// payoff kinks.
fn kink_point(inputs: &ExpansionInputs, strike: f64) -> Result<f64> {
    check_strike(strike)?;
    let (_, d_minus) = d_pm(&BsQuote::new(inputs.spot, strike, inputs.v_eps)?)?;
    Ok(-d_minus)
}

/// The three equivalent first-order put expressions.
pub fn put_expansion(
    inputs: &ExpansionInputs,
    mean: &ConditionalMean,
    strike: f64,
) -> Result<PutExpansionReport> {
    let x = kink_point(inputs, strike)?;
    let quote = BsQuote::new(inputs.spot, strike, inputs.v_eps)?;
    let leading = put_price(&quote);
    let m = mean.value(x);
    let eps = inputs.eps;
    let correction = eps / (2.0 * libm::sqrt(inputs.v_eps)) * strike * m * norm_pdf(x);
    let form_b = leading + eps * dp_dt(&quote)? * m;
    let equivalent_variance = inputs.v_eps + eps * m;
    let form_c = if equivalent_variance > 0.0 {
        put_price(&BsQuote::new(inputs.spot, strike, equivalent_variance)?)
    } else {
        f64::NAN
    };
    Ok(PutExpansionReport {
        strike,
        leading,
        correction,
        form_a: leading + correction,
        form_b,
        form_c,
        equivalent_variance,
    })
}

/// Call price at first order, from [`put_expansion`] by parity.
pub fn call_expansion(inputs: &ExpansionInputs, mean: &ConditionalMean, strike: f64) -> Result<f64> {
    Ok(put_expansion(inputs, mean, strike)?.form_a + inputs.spot - strike)
}

/// `P[S_T < K] ≈ Φ(-d_-) + ε/(2√v) g(-d_-) + ε/(2v) g'(-d_-)` with
/// `g = m φ`.
pub fn digital_expansion(inputs: &ExpansionInputs, mean: &ConditionalMean, strike: f64) -> Result<f64> {
    let x = kink_point(inputs, strike)?;
    let phi = norm_pdf(x);
    let g = mean.value(x) * phi;
    let dg = (mean.derivative(x) - x * mean.value(x)) * phi;
    let eps = inputs.eps;
    let v = inputs.v_eps;
    Ok(norm_cdf(x) + eps / (2.0 * libm::sqrt(v)) * g + eps / (2.0 * v) * dg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmilePoint {
    pub strike: f64,
    pub log_moneyness: f64,
    pub implied_total_variance: f64,
}

/// `v̂(K) = v + ε m(-d_-(S_0, v))`.
pub fn implied_variance_expansion(
    inputs: &ExpansionInputs,
    mean: &ConditionalMean,
    strike: f64,
) -> Result<SmilePoint> {
    let x = kink_point(inputs, strike)?;
    Ok(SmilePoint {
        strike,
        log_moneyness: libm::log(strike / inputs.spot),
        implied_total_variance: inputs.v_eps + inputs.eps * mean.value(x),
    })
}

/// First-order expansion of the implied total volatility `√v̂(K)`:
/// `√v + ε m(-d_-) / (2√v)`.
pub fn total_volatility_expansion(
    inputs: &ExpansionInputs,
    mean: &ConditionalMean,
    strike: f64,
) -> Result<f64> {
    let x = kink_point(inputs, strike)?;
    let sqrt_v = libm::sqrt(inputs.v_eps);
    Ok(sqrt_v + inputs.eps * mean.value(x) / (2.0 * sqrt_v))
}

/// At-the-money skew of `√v̂` in log-moneyness, `ε E[XY] / (2v)`.
pub fn skew_atm(inputs: &ExpansionInputs, mean: &ConditionalMean) -> Result<f64> {
    match mean {
        ConditionalMean::Affine { exy } => Ok(inputs.eps * exy / (2.0 * inputs.v_eps)),
        ConditionalMean::Custom(_) => Err(Error::domain(
            "skew_atm needs an affine conditional mean; use skew_generic",
        )),
    }
}

/// Skew of `√v̂` at log-moneyness `k`:
/// `ε/(2√v) ∂_k m(k/√v + √v/2) = ε m'(k/√v + √v/2) / (2v)`.
pub fn skew_generic(inputs: &ExpansionInputs, mean: &ConditionalMean, k: f64) -> f64 {
    let sqrt_v = libm::sqrt(inputs.v_eps);
    inputs.eps / (2.0 * sqrt_v) * mean.derivative(k / sqrt_v + 0.5 * sqrt_v) / sqrt_v
}

/// [`implied_variance_expansion`] over a strike list, order preserved.
pub fn smile(
    inputs: &ExpansionInputs,
    mean: &ConditionalMean,
    strikes: &[f64],
) -> Result<Vec<SmilePoint>> {
    strikes
        .iter()
        .map(|&k| implied_variance_expansion(inputs, mean, k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bs::implied_total_variance;
    use crate::model::CustomMean;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const C: f64 = -0.7 * 0.04 / 0.96;

    fn reference(eps: f64) -> ExpansionInputs {
        ExpansionInputs::new(100.0, 0.04, C, eps).unwrap()
    }

    fn affine() -> ConditionalMean {
        ConditionalMean::Affine { exy: C }
    }

    /// `φ^ε` from central differences of `m φ`, independent of the Hermite
    /// closed form.
    fn density_by_differences(inputs: &ExpansionInputs, mean: &ConditionalMean, x: f64) -> f64 {
        let g = |y: f64| mean.value(y) * norm_pdf(y);
        let h = 1e-4;
        let dg = (g(x + h) - g(x - h)) / (2.0 * h);
        let d2g = (g(x + h) - 2.0 * g(x) + g(x - h)) / (h * h);
        let v = inputs.v_eps;
        norm_pdf(x) + inputs.eps / (2.0 * libm::sqrt(v)) * dg + inputs.eps / (2.0 * v) * d2g
    }

    #[test]
    fn density_reduces_to_gaussian() {
        let d0 = ExpandedDensity::new(reference(0.0), affine());
        let dc = ExpandedDensity::new(reference(0.3), ConditionalMean::Affine { exy: 0.0 });
        for x in [-3.0, -0.5, 0.0, 1.2, 4.0] {
            assert_eq!(d0.at(x), norm_pdf(x));
            assert_eq!(dc.at(x), norm_pdf(x));
        }
    }

    #[test]
    fn density_at_origin() {
        let d = ExpandedDensity::new(reference(0.2), affine());
        let expected = norm_pdf(0.0) * (1.0 - 0.014_583_333_333_333_334);
        assert_relative_eq!(d.at(0.0), expected, max_relative = 1e-14);
        for x in [-2.5, -1.0, 0.0, 0.7, 3.1] {
            let oracle = density_by_differences(&reference(0.2), &affine(), x);
            assert!((d.at(x) - oracle).abs() < 1e-7);
        }
    }

    #[test]
    fn custom_density_matches_differences() {
        let mean = ConditionalMean::Custom(CustomMean::new(|x| 0.01 * libm::sin(x) + 0.002 * x * x).unwrap());
        let inputs = reference(0.2);
        let d = ExpandedDensity::new(inputs, mean.clone());
        for x in [-2.0, -0.3, 0.4, 1.9] {
            let oracle = density_by_differences(&inputs, &mean, x);
            assert!((d.at(x) - oracle).abs() < 1e-6, "{x}");
        }
    }

    #[test]
    fn signed_density_is_reported_not_clamped() {
        let big = ExpansionInputs::new(100.0, 0.04, -0.2, 1.0).unwrap();
        let d = ExpandedDensity::new(big, ConditionalMean::Affine { exy: -0.2 });
        assert!(d.min_over_window() < 0.0);
        let total = expected_payoff(&d, |_| 1.0, &[]).unwrap().value;
        assert!((total - 1.0).abs() < 1e-10);
        let small = ExpandedDensity::new(reference(0.0), affine());
        assert!(small.min_over_window() >= 0.0);
    }

    #[test]
    fn normalization_and_forward() {
        for eps in [0.0, 0.1, 0.2, 0.4] {
            let d = ExpandedDensity::new(reference(eps), affine());
            let mass = expected_payoff(&d, |_| 1.0, &[]).unwrap().value;
            assert!((mass - 1.0).abs() < 1e-10);
            let fwd = expected_payoff(&d, |s| s, &[]).unwrap().value;
            assert!((fwd - 100.0).abs() < 1e-9 * 100.0);
        }
    }

    #[test]
    fn payoff_at_zero_eps_is_black_scholes() {
        let d = ExpandedDensity::new(reference(0.0), affine());
        for k in [80.0, 100.0, 125.0] {
            let q = expected_payoff(&d, |s| (k - s).max(0.0), &[k]).unwrap().value;
            let bs = put_price(&BsQuote::new(100.0, k, 0.04).unwrap());
            assert!((q - bs).abs() < 1e-10, "{k}: {q} vs {bs}");
        }
    }

    #[test]
    fn put_expansion_reference_values() {
        let r = put_expansion(&reference(0.2), &affine(), 100.0).unwrap();
        // m(-d_-) = c √v / 2 at the money; correction = ε ∂p/∂t m.
        assert_relative_eq!(r.correction, 0.2 * 99.238_136_869_252_94 * (-0.002_916_666_666_666_666_7), max_relative = 1e-12);
        assert_relative_eq!(r.correction, -0.057_888_913_173_730_88, max_relative = 1e-12);
        assert_relative_eq!(r.form_a, 7.907_678_542_232_065, max_relative = 1e-13);
        assert_relative_eq!(r.form_c, 7.907_463_814_871_377, max_relative = 1e-13);
        assert!((r.form_a - r.form_b).abs() <= 1e-12 * 100.0);
        let q = expected_payoff(
            &ExpandedDensity::new(reference(0.2), affine()),
            |s| (100.0 - s).max(0.0),
            &[100.0],
        )
        .unwrap()
        .value;
        assert!((q - r.form_a).abs() < 1e-9);
    }

    #[test]
    fn put_expansion_degenerate_cases() {
        let r = put_expansion(&reference(0.0), &affine(), 95.0).unwrap();
        assert_eq!(r.form_a, r.leading);
        assert_eq!(r.form_b, r.leading);
        assert_eq!(r.form_c, r.leading);
        let zero = ConditionalMean::Affine { exy: 0.0 };
        let r = put_expansion(&reference(0.3), &zero, 105.0).unwrap();
        assert_eq!(r.correction, 0.0);
        assert_eq!(r.form_a, put_price(&BsQuote::new(100.0, 105.0, 0.04).unwrap()));
        assert!(put_expansion(&reference(0.2), &affine(), 0.0).unwrap_err().is_domain());
    }

    #[test]
    fn parity_at_expansion_level() {
        for k in [70.0, 100.0, 140.0] {
            let put = put_expansion(&reference(0.2), &affine(), k).unwrap().form_a;
            let call = call_expansion(&reference(0.2), &affine(), k).unwrap();
            assert!((call - put - (100.0 - k)).abs() < 1e-12 * 100.0);
        }
    }

    #[test]
    fn digital_matches_quadrature() {
        assert_eq!(
            digital_expansion(&reference(0.0), &affine(), 100.0).unwrap(),
            norm_cdf(0.1)
        );
        let d = ExpandedDensity::new(reference(0.2), affine());
        for k in [90.0, 100.0, 110.0] {
            let closed = digital_expansion(&reference(0.2), &affine(), k).unwrap();
            let quad = expected_payoff(&d, |s| if s < k { 1.0 } else { 0.0 }, &[k]).unwrap().value;
            assert!((closed - quad).abs() < 1e-9, "{k}");
        }
        assert_relative_eq!(
            digital_expansion(&reference(0.2), &affine(), 100.0).unwrap(),
            0.510_593_936_124_294_9,
            max_relative = 1e-14
        );
    }

    #[test]
    fn implied_variance_reference() {
        assert_eq!(
            implied_variance_expansion(&reference(0.0), &affine(), 120.0)
                .unwrap()
                .implied_total_variance,
            0.04
        );
        let p = implied_variance_expansion(&reference(0.2), &affine(), 100.0).unwrap();
        assert_relative_eq!(p.implied_total_variance, 0.039_416_666_666_666_67, max_relative = 1e-14);
        assert_eq!(p.log_moneyness, 0.0);
        let eps = 0.2;
        let inv = implied_total_variance(
            put_expansion(&reference(eps), &affine(), 100.0).unwrap().form_a,
            100.0,
            100.0,
        )
        .unwrap()
        .value();
        assert!((inv - p.implied_total_variance).abs() < 10.0 * eps * eps * C * C);
    }

    /// `|f(ε)| / |f(ε/2)|` for ε = 0.4, 0.2, 0.1.
    fn halving_ratios(f: impl Fn(f64) -> f64) -> Vec<f64> {
        [0.4, 0.2, 0.1].iter().map(|&e| f(e).abs() / f(e / 2.0).abs()).collect()
    }

    #[test]
    fn form_c_gap_is_second_order() {
        let gap = |e: f64| {
            let r = put_expansion(&reference(e), &affine(), 100.0).unwrap();
            r.form_a - r.form_c
        };
        for r in halving_ratios(gap) {
            assert!((3.5..=4.5).contains(&r), "{r}");
        }
    }

    #[test]
    fn implied_variance_gap_is_second_order() {
        let gap = |e: f64| {
            let price = put_expansion(&reference(e), &affine(), 100.0).unwrap().form_a;
            implied_total_variance(price, 100.0, 100.0).unwrap().value()
                - implied_variance_expansion(&reference(e), &affine(), 100.0)
                    .unwrap()
                    .implied_total_variance
        };
        for r in halving_ratios(gap) {
            assert!((3.5..=4.5).contains(&r), "{r}");
        }
    }

    #[test]
    fn skew_values() {
        assert_eq!(skew_atm(&reference(0.2), &ConditionalMean::Affine { exy: 0.0 }).unwrap(), 0.0);
        let s = skew_atm(&reference(0.2), &affine()).unwrap();
        assert_relative_eq!(s, -0.072_916_666_666_666_67, max_relative = 1e-14);
        assert!(s < 0.0);
        for k in [-0.3, 0.0, 0.2] {
            assert_relative_eq!(skew_generic(&reference(0.2), &affine(), k), s, max_relative = 1e-14);
        }
        let custom = ConditionalMean::Custom(CustomMean::new(|x| x * x).unwrap());
        assert!(skew_atm(&reference(0.2), &custom).is_err());
        let flat = ConditionalMean::Custom(CustomMean::new(|_| 0.3).unwrap());
        assert_eq!(skew_generic(&reference(0.2), &flat, 0.1), 0.0);
    }

    #[test]
    fn skew_matches_first_order_vol_differences() {
        let inputs = reference(0.2);
        let h = 1e-4;
        let vol = |k: f64| total_volatility_expansion(&inputs, &affine(), 100.0 * libm::exp(k)).unwrap();
        let fd = (vol(h) - vol(-h)) / (2.0 * h);
        assert!((fd - skew_atm(&inputs, &affine()).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn sqrt_of_implied_variance_differs_at_second_order() {
        // Differentiating √v̂ itself picks up the O(ε²) factor √(v / v̂).
        let gap = |e: f64| {
            let inputs = reference(e);
            let h = 1e-4;
            let vol = |k: f64| {
                libm::sqrt(
                    implied_variance_expansion(&inputs, &affine(), 100.0 * libm::exp(k))
                        .unwrap()
                        .implied_total_variance,
                )
            };
            (vol(h) - vol(-h)) / (2.0 * h) - skew_atm(&inputs, &affine()).unwrap()
        };
        for r in halving_ratios(gap) {
            assert!((3.5..=4.5).contains(&r), "{r}");
        }
    }

    #[test]
    fn custom_quadratic_skew() {
        let inputs = reference(0.2);
        let mean = ConditionalMean::Custom(CustomMean::new(|x| x * x).unwrap());
        let sqrt_v = 0.2;
        for k in [-0.1, 0.0, 0.05] {
            let x = k / sqrt_v + sqrt_v / 2.0;
            let expected = inputs.eps / sqrt_v * x / sqrt_v;
            assert_relative_eq!(skew_generic(&inputs, &mean, k), expected, max_relative = 1e-8);
        }
    }

    #[test]
    fn smile_preserves_order() {
        assert!(smile(&reference(0.2), &affine(), &[]).unwrap().is_empty());
        let atm = smile(&reference(0.2), &affine(), &[100.0]).unwrap();
        assert_eq!(atm[0], implied_variance_expansion(&reference(0.2), &affine(), 100.0).unwrap());
        let strikes: Vec<f64> = (0..21).map(|i| 70.0 + 3.0 * i as f64).collect();
        let pts = smile(&reference(0.2), &affine(), &strikes).unwrap();
        for (p, &k) in pts.iter().zip(&strikes) {
            assert_eq!(p.strike, k);
            assert_eq!(*p, implied_variance_expansion(&reference(0.2), &affine(), k).unwrap());
        }
        // Negative E[XY]: implied variance decreases with strike.
        assert!(pts.windows(2).all(|w| w[1].implied_total_variance < w[0].implied_total_variance));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn put_forms_a_and_b_agree(v in 0.005..0.3f64, exy in -0.1..0.1f64, eps in 0.0..0.5f64,
                                   strike in 50.0..200.0f64) {
            let inputs = ExpansionInputs::new(100.0, v, exy, eps).unwrap();
            let r = put_expansion(&inputs, &ConditionalMean::Affine { exy }, strike).unwrap();
            prop_assert!((r.form_a - r.form_b).abs() <= 1e-12 * strike);
            let call = call_expansion(&inputs, &ConditionalMean::Affine { exy }, strike).unwrap();
            prop_assert!((call - r.form_a - (100.0 - strike)).abs() <= 1e-12 * strike);
        }
    }
}
