//! Brute-force oracle for `E[XY]` under a flat forward variance curve.
//!
//! `E[XY] = v^{-1/2} ∫_0^T √v0 ∫_s^T v0 ρ k(u - s) du ds`, summed on an n×n
//! midpoint grid over the cells strictly above the diagonal, then
//! Richardson-extrapolated over three grid sizes. Nothing here touches the
//! library's quadrature.

/// Midpoint double sum of `ρ k(u - s)` over `0 < s < u < T`, diagonal cells
/// skipped (they hold the kernel singularity).
pub fn double_sum(k: &dyn Fn(f64) -> f64, rho: f64, horizon: f64, n: usize) -> f64 {
    let h = horizon / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let s = (i as f64 + 0.5) * h;
        let mut row = 0.0;
        for j in i + 1..n {
            let u = (j as f64 + 0.5) * h;
            row += k(u - s);
        }
        total += row;
    }
    rho * total * h * h
}

/// Removes the error terms `h^p1` and `h^p2` from sums at `n`, `2n`, `4n`.
pub fn richardson(s: [f64; 3], p1: f64, p2: f64) -> f64 {
    let r = |a: f64, b: f64, p: f64| {
        let f = 2f64.powf(p);
        (f * b - a) / (f - 1.0)
    };
    let r1 = [r(s[0], s[1], p1), r(s[1], s[2], p1)];
    r(r1[0], r1[1], p2)
}

/// Extrapolated `E[XY]` for one factor on a flat curve `v0` with
/// `v = v0 T`; `p1 < p2` are the leading error exponents of the raw sum.
pub fn exy_flat(
    k: &dyn Fn(f64) -> f64,
    rho: f64,
    v0: f64,
    horizon: f64,
    n: usize,
    p1: f64,
    p2: f64,
) -> f64 {
    let sums = [n, 2 * n, 4 * n].map(|m| double_sum(k, rho, horizon, m));
    let v = v0 * horizon;
    v0.sqrt() * v0 * richardson(sums, p1, p2) / v.sqrt()
}
