//! Bergomi-type small vol-of-vol models and the statistics the first-order
//! expansion consumes: the base total variance `v` and the limit covariance
//! `E[XY]` between the normalized price martingale and the normalized
//! integrated-variance fluctuation.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::bs::norm_pdf;
use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_power_singularity, integrate_with_breaks, QuadResult};

/// Default relative tolerance of the outer covariance integral.
pub const COVARIANCE_REL_TOL: f64 = 1e-9;

const TABULATED_REFINEMENT: usize = 8;
const FD_STEP: f64 = 1e-5;
const BOUNDARY_PROBE: f64 = 10.0;
const BOUNDARY_TOL: f64 = 1e-12;

/// Linearly interpolated kernel given on a grid starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedKernel {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TabulatedKernel {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::domain(
                "tabulated kernel needs at least two (time, value) pairs of equal length",
            ));
        }
        if times[0] != 0.0 {
            return Err(Error::domain("tabulated kernel grid must start at 0"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::domain("tabulated kernel times must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("tabulated kernel values must be finite"));
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= 0.0 {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let i = self.times.partition_point(|&x| x <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }

    /// Trapezoidal integral over `[lo, hi]` on the kernel grid refined ×8.
    fn trapezoid(&self, lo: f64, hi: f64) -> f64 {
        let mut nodes = Vec::new();
        nodes.push(lo);
        for w in self.times.windows(2) {
            let step = (w[1] - w[0]) / TABULATED_REFINEMENT as f64;
            for j in 0..TABULATED_REFINEMENT {
                let x = w[0] + j as f64 * step;
                if x > lo && x < hi {
                    nodes.push(x);
                }
            }
        }
        let last = self.times[self.times.len() - 1];
        if last > lo && last < hi {
            nodes.push(last);
        }
        nodes.push(hi);
        nodes
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.value(w[0]) + self.value(w[1])))
            .sum()
    }
}

/// Volterra kernel `k(t)` of one log-variance factor.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// `a e^{-b t}`: the classical Bergomi factor.
    Exponential { a: f64, b: f64 },
    /// `a t^{H - 1/2}`: the rough Bergomi factor.
    Power { a: f64, hurst: f64 },
    Tabulated(TabulatedKernel),
}

impl Kernel {
    pub fn exponential(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite()) {
            return Err(Error::domain("exponential kernel needs a > 0 and b > 0"));
        }
        Ok(Kernel::Exponential { a, b })
    }

    pub fn power(a: f64, hurst: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::domain("power kernel needs a > 0"));
        }
        if !(hurst > 0.0 && hurst <= 0.5) {
            return Err(Error::domain("power kernel needs H in (0, 1/2]"));
        }
        Ok(Kernel::Power { a, hurst })
    }

    pub fn tabulated(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        TabulatedKernel::new(times, values).map(Kernel::Tabulated)
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Kernel::Exponential { a, b } => a * libm::exp(-b * t),
            Kernel::Power { a, hurst } => a * libm::pow(t, hurst - 0.5),
            Kernel::Tabulated(table) => table.value(t),
        }
    }

    /// `∫_lo^hi k(τ) dτ` for `0 ≤ lo ≤ hi`.
    pub fn integral(&self, lo: f64, hi: f64, rel_tol: f64) -> Result<f64> {
        if !(lo >= 0.0 && hi >= lo) {
            return Err(Error::domain("kernel integral needs 0 <= lo <= hi"));
        }
        if hi == lo {
            return Ok(0.0);
        }
        match self {
            Kernel::Power { a, hurst } if lo == 0.0 => {
                integrate_power_singularity(|_| *a, *hurst, hi, rel_tol).map(|r| r.value)
            }
            Kernel::Tabulated(table) => Ok(table.trapezoid(lo, hi)),
            _ => integrate(|t| self.value(t), lo, hi, rel_tol).map(|r| r.value),
        }
    }
}

/// Deterministic forward variance curve `V_0(t) = E[V_t]`.
#[derive(Debug, Clone, PartialEq)]
pub enum ForwardVarianceCurve {
    Flat { v0: f64 },
    /// `values[i]` on `[breakpoints[i], breakpoints[i + 1])`.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
}

impl ForwardVarianceCurve {
    pub fn flat(v0: f64) -> Result<Self> {
        if !(v0 > 0.0 && v0.is_finite()) {
            return Err(Error::domain("forward variance must be positive"));
        }
        Ok(ForwardVarianceCurve::Flat { v0 })
    }

    pub fn piecewise_constant(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || breakpoints.len() != values.len() + 1 {
            return Err(Error::domain(
                "piecewise-constant curve needs one more breakpoint than values",
            ));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::domain("curve breakpoints must start at 0"));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::domain("curve breakpoints must be strictly increasing"));
        }
        if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::domain("forward variance must be positive"));
        }
        Ok(ForwardVarianceCurve::PiecewiseConstant {
            breakpoints,
            values,
        })
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            ForwardVarianceCurve::Flat { v0 } => *v0,
            ForwardVarianceCurve::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                let i = breakpoints.partition_point(|&b| b <= t);
                values[i.saturating_sub(1).min(values.len() - 1)]
            }
        }
    }

    /// Largest time the curve is defined on.
    pub fn end(&self) -> f64 {
        match self {
            ForwardVarianceCurve::Flat { .. } => f64::INFINITY,
            ForwardVarianceCurve::PiecewiseConstant { breakpoints, .. } => {
                breakpoints[breakpoints.len() - 1]
            }
        }
    }

    /// Interior breakpoints strictly inside `(lo, hi)`.
    pub fn jumps_within(&self, lo: f64, hi: f64) -> Vec<f64> {
        match self {
            ForwardVarianceCurve::Flat { .. } => Vec::new(),
            ForwardVarianceCurve::PiecewiseConstant { breakpoints, .. } => breakpoints
                .iter()
                .copied()
                .filter(|&b| b > lo && b < hi)
                .collect(),
        }
    }

    /// `∫_0^horizon V_0(t) dt`, exact.
    pub fn integral(&self, horizon: f64) -> f64 {
        match self {
            ForwardVarianceCurve::Flat { v0 } => v0 * horizon,
            ForwardVarianceCurve::PiecewiseConstant {
                breakpoints,
                values,
            } => breakpoints
                .windows(2)
                .zip(values)
                .map(|(w, v)| v * (w[1].min(horizon) - w[0].min(horizon)))
                .sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub rho: f64,
    pub kernel: Kernel,
}

impl Factor {
    pub fn new(rho: f64, kernel: Kernel) -> Self {
        Self { rho, kernel }
    }
}

/// A Bergomi-type model
/// `V_t = V_0(t) exp{ε Σ_i ∫_0^t k_i(t-s) dW^i_s - ε²/2 Σ_i ∫_0^t k_i(t-s)² ds}`
/// with `d⟨B, W^i⟩ = ρ_i dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    spot: f64,
    horizon: f64,
    eps: f64,
    factors: Vec<Factor>,
    curve: ForwardVarianceCurve,
}

impl ModelSpec {
    pub fn new(
        spot: f64,
        horizon: f64,
        eps: f64,
        factors: Vec<Factor>,
        curve: ForwardVarianceCurve,
    ) -> Result<Self> {
        if !(spot > 0.0 && spot.is_finite()) {
            return Err(Error::domain("spot must be positive"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::domain("horizon must be positive"));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::domain("eps must be nonnegative"));
        }
        if factors.is_empty() {
            return Err(Error::domain("model needs at least one factor"));
        }
        let rho_sq: f64 = factors.iter().map(|f| f.rho * f.rho).sum();
        if !(rho_sq < 1.0) {
            return Err(Error::domain(format!(
                "sum of squared correlations must be below 1 (got {rho_sq})"
            )));
        }
        if curve.end() < horizon {
            return Err(Error::domain("forward variance curve does not cover the horizon"));
        }
        for f in &factors {
            if let Kernel::Tabulated(table) = &f.kernel {
                if table.times[table.times.len() - 1] < horizon {
                    return Err(Error::domain("tabulated kernel does not cover the horizon"));
                }
            }
        }
        Ok(Self {
            spot,
            horizon,
            eps,
            factors,
            curve,
        })
    }

    pub fn spot(&self) -> f64 {
        self.spot
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn curve(&self) -> &ForwardVarianceCurve {
        &self.curve
    }

    /// Aggregate correlation `ρ = (Σ ρ_i²)^{1/2}`.
    pub fn rho(&self) -> f64 {
        libm::sqrt(self.factors.iter().map(|f| f.rho * f.rho).sum())
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(
            self.spot,
            self.horizon,
            eps,
            self.factors.clone(),
            self.curve.clone(),
        )
    }

    pub fn with_curve(&self, curve: ForwardVarianceCurve) -> Result<Self> {
        Self::new(self.spot, self.horizon, self.eps, self.factors.clone(), curve)
    }
}

/// `v = ∫_0^T V_0(t) dt`.
pub fn total_base_variance(model: &ModelSpec) -> f64 {
    model.curve.integral(model.horizon)
}

/// `E[XY] = v^{-1/2} ∫_0^T √V_0(s) ∫_s^T V_0(u) Σ_i ρ_i k_i(u - s) du ds`
/// by nested adaptive quadrature.
pub fn cross_covariance(model: &ModelSpec) -> Result<f64> {
    cross_covariance_with_tol(model, COVARIANCE_REL_TOL).map(|r| r.value)
}

/// [`cross_covariance`] at a caller-chosen outer tolerance; the inner
/// integrals run ten times tighter.
pub fn cross_covariance_with_tol(model: &ModelSpec, rel_tol: f64) -> Result<QuadResult> {
    let horizon = model.horizon;
    let curve = &model.curve;
    let inner_tol = 0.1 * rel_tol;
    let v = total_base_variance(model);

    // ∫_s^T V_0(u) Σ ρ_i k_i(u - s) du, exact in the curve: on each constant
    // piece only the kernel is integrated.
    let inner = |s: f64| -> Result<f64> {
        let mut edges = Vec::new();
        edges.push(s);
        edges.extend(curve.jumps_within(s, horizon));
        edges.push(horizon);
        let mut total = 0.0;
        for w in edges.windows(2) {
            let level = curve.value(0.5 * (w[0] + w[1]));
            for f in model.factors.iter().filter(|f| f.rho != 0.0) {
                total += f.rho * level * f.kernel.integral(w[0] - s, w[1] - s, inner_tol)?;
            }
        }
        Ok(total)
    };

    let failure = core::cell::RefCell::new(None);
    let mut points = Vec::new();
    points.push(0.0);
    points.extend(curve.jumps_within(0.0, horizon));
    points.push(horizon);
    let outer = integrate_with_breaks(
        |s| match inner(s) {
            Ok(x) => libm::sqrt(curve.value(s)) * x,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        &points,
        rel_tol,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let outer = outer?;
    let scale = 1.0 / libm::sqrt(v);
    Ok(QuadResult {
        value: outer.value * scale,
        abs_error_estimate: outer.abs_error_estimate * scale,
        subdivisions: outer.subdivisions,
    })
}

/// Closed form of [`cross_covariance`] for a flat curve whose kernels are
/// all exponential or power-law; `None` otherwise.
///
/// With `V_0 ≡ v_0` each factor contributes
/// `ρ a v_0 T^{H+1} / ((H+1/2)(H+3/2))` (power) or
/// `ρ a v_0 (T - (1 - e^{-bT})/b) / (b √T)` (exponential).
pub fn cross_covariance_closed_form(model: &ModelSpec) -> Option<f64> {
    let ForwardVarianceCurve::Flat { v0 } = model.curve else {
        return None;
    };
    let t = model.horizon;
    let mut total = 0.0;
    for f in &model.factors {
        total += match f.kernel {
            Kernel::Power { a, hurst } => {
                f.rho * a * v0 * libm::pow(t, hurst + 1.0) / ((hurst + 0.5) * (hurst + 1.5))
            }
            Kernel::Exponential { a, b } => {
                f.rho * a * v0 * (t + libm::expm1(-b * t) / b) / (b * libm::sqrt(t))
            }
            Kernel::Tabulated(_) => return None,
        };
    }
    Some(total)
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied `x ↦ E[Y | X = x]` together with its first two
/// derivatives (central differences when not supplied).
#[derive(Clone)]
pub struct CustomMean {
    m: RealFn,
    dm: Option<RealFn>,
    d2m: Option<RealFn>,
}

impl fmt::Debug for CustomMean {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomMean")
            .field("analytic_dm", &self.dm.is_some())
            .field("analytic_d2m", &self.d2m.is_some())
            .finish()
    }
}

impl CustomMean {
    pub fn new(m: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        Self::checked(Self {
            m: Arc::new(m),
            dm: None,
            d2m: None,
        })
    }

    pub fn with_derivatives(
        m: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dm: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2m: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::checked(Self {
            m: Arc::new(m),
            dm: Some(Arc::new(dm)),
            d2m: Some(Arc::new(d2m)),
        })
    }

    /// `m(x) = Σ_j c_j x^j` with exact derivatives.
    pub fn polynomial(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("polynomial coefficients must be finite"));
        }
        let c0 = Arc::new(coefficients);
        let (c1, c2) = (c0.clone(), c0.clone());
        Self::with_derivatives(
            move |x| horner(&c0, x),
            move |x| horner_derivative(&c1, x, 1),
            move |x| horner_derivative(&c2, x, 2),
        )
    }

    // Both m φ and (m φ)' must vanish in the tails for the expansion's
    // integrations by parts to hold.
    fn checked(self) -> Result<Self> {
        for x in [-BOUNDARY_PROBE, BOUNDARY_PROBE] {
            let g = self.value(x) * norm_pdf(x);
            let dg = (self.derivative(x) - x * self.value(x)) * norm_pdf(x);
            if !(g.abs() < BOUNDARY_TOL && dg.abs() < BOUNDARY_TOL) {
                return Err(Error::domain(format!(
                    "conditional mean fails the tail condition at x = {x}"
                )));
            }
        }
        Ok(self)
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.m)(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match &self.dm {
            Some(dm) => dm(x),
            None => ((self.m)(x + FD_STEP) - (self.m)(x - FD_STEP)) / (2.0 * FD_STEP),
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match &self.d2m {
            Some(d2m) => d2m(x),
            None => {
                ((self.m)(x + FD_STEP) - 2.0 * (self.m)(x) + (self.m)(x - FD_STEP))
                    / (FD_STEP * FD_STEP)
            }
        }
    }
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

fn horner_derivative(c: &[f64], x: f64, order: usize) -> f64 {
    let mut acc = 0.0;
    for (j, &cj) in c.iter().enumerate().skip(order).rev() {
        let falling: f64 = (0..order).map(|i| (j - i) as f64).product();
        acc = acc * x + cj * falling;
    }
    acc
}

/// The conditional mean `x ↦ E[Y | X = x]` of the limit pair `(X, Y)`.
#[derive(Debug, Clone)]
pub enum ConditionalMean {
    /// Gaussian limit: `E[Y | X = x] = E[XY] x`.
    Affine { exy: f64 },
    Custom(CustomMean),
}

impl ConditionalMean {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            ConditionalMean::Affine { exy } => exy * x,
            ConditionalMean::Custom(c) => c.value(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            ConditionalMean::Affine { exy } => *exy,
            ConditionalMean::Custom(c) => c.derivative(x),
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match self {
            ConditionalMean::Affine { .. } => 0.0,
            ConditionalMean::Custom(c) => c.second_derivative(x),
        }
    }
}

/// The three numbers the first-order expansion needs, plus the spot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionInputs {
    pub spot: f64,
    pub v_eps: f64,
    pub exy: f64,
    pub eps: f64,
}

impl ExpansionInputs {
    pub fn new(spot: f64, v_eps: f64, exy: f64, eps: f64) -> Result<Self> {
        if !(spot > 0.0 && spot.is_finite()) {
            return Err(Error::domain("spot must be positive"));
        }
        if !(v_eps > 0.0 && v_eps.is_finite()) {
            return Err(Error::domain("base total variance must be positive"));
        }
        if !(eps >= 0.0 && eps.is_finite() && exy.is_finite()) {
            return Err(Error::domain("eps must be nonnegative and E[XY] finite"));
        }
        Ok(Self {
            spot,
            v_eps,
            exy,
            eps,
        })
    }

    pub fn with_eps(self, eps: f64) -> Result<Self> {
        Self::new(self.spot, self.v_eps, self.exy, eps)
    }

    /// The Gaussian-limit conditional mean `E[XY] x`.
    pub fn conditional_mean(&self) -> ConditionalMean {
        ConditionalMean::Affine { exy: self.exy }
    }
}

pub fn expansion_inputs(model: &ModelSpec) -> Result<ExpansionInputs> {
    let v = total_base_variance(model);
    let exy = cross_covariance(model)?;
    ExpansionInputs::new(model.spot, v, exy, model.eps)
}
