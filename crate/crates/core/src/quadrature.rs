//! Adaptive Gauss–Kronrod quadrature.
//!
//! A single 7/15-point Gauss–Kronrod pair drives everything: the Kronrod sum
//! is the panel estimate and its distance to the embedded Gauss sum the
//! panel error. Panels are bisected worst-first until the global error
//! estimate meets the requested relative tolerance.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::bs::norm_pdf;
use crate::error::{Error, Result};

/// Panel budget before giving up.
pub const MAX_PANELS: usize = 100_000;

/// Half-width of the window used for Gaussian-weighted integrals.
pub const GAUSSIAN_TRUNCATION: f64 = 12.0;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5] and the center.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub subdivisions: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    // ∫|f| over the panel, used for the round-off floor.
    abs_value: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn kronrod_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    let mut kronrod = WGK[7] * f_center;
    let mut gauss = WG[3] * f_center;
    let mut abs_sum = WGK[7] * f_center.abs();
    let mut values = [0.0_f64; 14];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        values[2 * j] = f1;
        values[2 * j + 1] = f2;
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((values[2 * j] - mean).abs() + (values[2 * j + 1] - mean).abs());
    }
    let value = kronrod * half;
    let abs_value = abs_sum * half.abs();
    let asc = asc * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if asc != 0.0 && error != 0.0 {
        let scale = libm::pow(200.0 * error / asc, 1.5);
        error = if scale < 1.0 { asc * scale } else { asc };
    }
    if abs_value > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * abs_value);
    }
    Panel {
        a,
        b,
        value,
        error,
        abs_value,
    }
}

/// Adaptive integral of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<QuadResult> {
    integrate_with_breaks(f, &[a, b], rel_tol)
}

/// Adaptive integral over `[points[0], points[last]]` with the interior
/// points used as initial panel boundaries (kinks, jumps).
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    rel_tol: f64,
) -> Result<QuadResult> {
    if points.len() < 2 {
        return Err(Error::domain("need at least two integration limits"));
    }
    if !(rel_tol > 0.0) {
        return Err(Error::domain("relative tolerance must be positive"));
    }
    let lo = points[0];
    let hi = points[points.len() - 1];
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::domain("integration limits must be finite with a < b"));
    }
    let mut breaks: Vec<f64> = points
        .iter()
        .copied()
        .filter(|p| p.is_finite() && *p >= lo && *p <= hi)
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut heap = BinaryHeap::new();
    let mut frozen: Vec<Panel> = Vec::new();
    for w in breaks.windows(2) {
        heap.push(kronrod_panel(&f, w[0], w[1]));
    }
    let mut subdivisions = heap.len();

    loop {
        let (value, error, abs_value) = totals(heap.iter().chain(frozen.iter()));
        let tol = (rel_tol * value.abs()).max(100.0 * f64::EPSILON * abs_value);
        let finite = value.is_finite() && error.is_finite();
        if finite && error <= tol {
            return Ok(QuadResult {
                value,
                abs_error_estimate: error,
                subdivisions,
            });
        }
        if heap.is_empty() || !finite || subdivisions >= MAX_PANELS {
            return Err(Error::Quadrature {
                value,
                abs_error_estimate: error,
                subdivisions,
            });
        }
        // Refine the worst panels in a batch to keep the bookkeeping cheap.
        let batch = (heap.len() / 8).max(1);
        for _ in 0..batch {
            let Some(worst) = heap.pop() else { break };
            let mid = 0.5 * (worst.a + worst.b);
            if !(mid > worst.a && mid < worst.b)
                || (worst.b - worst.a) <= 1e3 * f64::EPSILON * mid.abs().max(f64::MIN_POSITIVE)
            {
                frozen.push(worst);
                continue;
            }
            heap.push(kronrod_panel(&f, worst.a, mid));
            heap.push(kronrod_panel(&f, mid, worst.b));
            subdivisions += 1;
        }
    }
}

fn totals<'a>(panels: impl Iterator<Item = &'a Panel>) -> (f64, f64, f64) {
    // Sum in left-to-right order so the result does not depend on heap layout.
    let mut sorted: Vec<&Panel> = panels.collect();
    sorted.sort_by(|x, y| x.a.total_cmp(&y.a));
    sorted.iter().fold((0.0, 0.0, 0.0), |(v, e, a), p| {
        (v + p.value, e + p.error, a + p.abs_value)
    })
}

/// `∫_a^b (t - a)^exponent g(t) dt` for `exponent > -1` and smooth `g`.
///
/// The substitution `w = (t - a)^(exponent + 1)` absorbs the algebraic
/// endpoint behaviour, leaving `g` alone under the integral sign.
pub fn integrate_endpoint_power<G: Fn(f64) -> f64>(
    g: G,
    exponent: f64,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    if !(exponent > -1.0) {
        return Err(Error::domain("endpoint exponent must exceed -1"));
    }
    if !(a < b) {
        return Err(Error::domain("integration limits must satisfy a < b"));
    }
    let p = exponent + 1.0;
    let inv_p = 1.0 / p;
    let w_max = libm::pow(b - a, p);
    let res = integrate(|w| g(a + libm::pow(w, inv_p)), 0.0, w_max, rel_tol)?;
    Ok(QuadResult {
        value: res.value * inv_p,
        abs_error_estimate: res.abs_error_estimate * inv_p,
        subdivisions: res.subdivisions,
    })
}

/// `∫_0^b t^(H - 1/2) g(t) dt`, the shape of a rough power-law kernel
/// integrated against a smooth weight.
pub fn integrate_power_singularity<G: Fn(f64) -> f64>(
    g: G,
    hurst: f64,
    b: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    if !(hurst > 0.0 && hurst <= 0.5) {
        return Err(Error::domain("Hurst exponent must lie in (0, 1/2]"));
    }
    integrate_endpoint_power(g, hurst - 0.5, 0.0, b, rel_tol)
}

/// `∫ h(x) φ(x) dx` over `|x| ≤ 12`, with `kinks` as extra panel boundaries.
pub fn integrate_gaussian_weighted<H: Fn(f64) -> f64>(
    h: H,
    kinks: &[f64],
    rel_tol: f64,
) -> Result<QuadResult> {
    let mut points = Vec::with_capacity(kinks.len() + 2);
    points.push(-GAUSSIAN_TRUNCATION);
    points.extend(
        kinks
            .iter()
            .copied()
            .filter(|x| x.abs() < GAUSSIAN_TRUNCATION),
    );
    points.push(GAUSSIAN_TRUNCATION);
    integrate_with_breaks(|x| h(x) * norm_pdf(x), &points, rel_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn polynomial_and_exponential() {
        let r = integrate(|_| 1.0, 0.0, 1.0, 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-15);
        let r = integrate(|x| x * x, 0.0, 1.0, 1e-12).unwrap();
        assert!((r.value - 1.0 / 3.0).abs() < 1e-12);
        let r = integrate(libm::exp, 0.0, 1.0, 1e-12).unwrap();
        assert!((r.value - (core::f64::consts::E - 1.0)).abs() < 1e-12);
        assert!(r.abs_error_estimate <= 1e-12 * r.value);
    }

    #[test]
    fn rejects_bad_limits() {
        assert!(integrate(|x| x, 1.0, 0.0, 1e-9).unwrap_err().is_domain());
        assert!(integrate(|x| x, 0.0, f64::INFINITY, 1e-9).is_err());
        assert!(integrate(|x| x, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn reports_non_convergence() {
        // 1/x on (0,1] diverges; the panel budget runs out or panels freeze.
        let err = integrate(|x| 1.0 / x, 0.0, 1.0, 1e-10).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }), "{err:?}");
    }

    #[test]
    fn power_singularity_closed_forms() {
        let r = integrate_power_singularity(|_| 1.0, 0.1, 1.0, 1e-12).unwrap();
        assert!((r.value - 5.0 / 3.0).abs() < 1e-12);
        let r = integrate_power_singularity(|_| 1.0, 0.5, 2.0, 1e-12).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
        assert!(integrate_power_singularity(|_| 1.0, 0.0, 1.0, 1e-12).is_err());
    }

    /// Midpoint sum on a mesh graded as `(i/n)^4` towards the singularity.
    fn graded_riemann(g: impl Fn(f64) -> f64, hurst: f64, b: f64, n: usize) -> f64 {
        let grid = |i: usize| b * libm::pow(i as f64 / n as f64, 4.0);
        let mut sum = 0.0;
        let mut left = 0.0;
        for i in 1..=n {
            let right = grid(i);
            let mid = 0.5 * (left + right);
            sum += libm::pow(mid, hurst - 0.5) * g(mid) * (right - left);
            left = right;
        }
        sum
    }

    #[test]
    fn power_singularity_vs_graded_mesh() {
        let oracle = graded_riemann(|t| libm::exp(-t), 0.1, 1.0, 10_000_000);
        let r = integrate_power_singularity(|t| libm::exp(-t), 0.1, 1.0, 1e-12).unwrap();
        assert!((r.value - oracle).abs() < 1e-10, "{} vs {}", r.value, oracle);
    }

    #[test]
    fn gaussian_weighted_moments() {
        let r = integrate_gaussian_weighted(|_| 1.0, &[], 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        let r = integrate_gaussian_weighted(|x| x * x, &[], 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
        let r =
            integrate_gaussian_weighted(|x| if x < 0.0 { 1.0 } else { 0.0 }, &[0.0], 1e-12)
                .unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kink_declaration() {
        let exact = 2.0 * norm_pdf(0.0);
        let with = integrate_gaussian_weighted(f64::abs, &[0.0], 1e-12).unwrap();
        assert!((with.value - exact).abs() < 1e-12);
        let without = integrate_gaussian_weighted(f64::abs, &[], 1e-12).unwrap();
        assert!((without.value - exact).abs() < 1e-11);
        assert!(without.subdivisions >= with.subdivisions);
    }

    #[test]
    fn tighter_tolerance_is_not_worse() {
        let exact = 1.0 - libm::cos(3.0);
        let mut last = f64::INFINITY;
        for tol in [1e-4, 1e-6, 1e-8, 1e-10, 1e-12] {
            let r = integrate(libm::sin, 0.0, 3.0, tol).unwrap();
            let err = (r.value - exact).abs();
            assert!(err <= last.max(1e-15));
            last = err;
        }
    }

    proptest! {
        #[test]
        fn linear_and_additive(c1 in -3.0..3.0f64, c2 in -3.0..3.0f64, w in 0.1..4.0f64,
                               a in -2.0..0.0f64, len in 0.5..4.0f64, cut in 0.05..0.95f64) {
            let b = a + len;
            let f = |x: f64| libm::sin(w * x);
            let g = |x: f64| libm::exp(-x * x);
            let lhs = integrate(|x| c1 * f(x) + c2 * g(x), a, b, 1e-13).unwrap().value;
            let rhs = c1 * integrate(f, a, b, 1e-13).unwrap().value
                + c2 * integrate(g, a, b, 1e-13).unwrap().value;
            prop_assert!((lhs - rhs).abs() <= 1e-12);
            let m = a + cut * len;
            let whole = integrate(g, a, b, 1e-13).unwrap().value;
            let parts = integrate(g, a, m, 1e-13).unwrap().value
                + integrate(g, m, b, 1e-13).unwrap().value;
            prop_assert!((whole - parts).abs() <= 1e-12);
        }
    }
}
