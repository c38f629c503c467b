use alloc::vec;
use alloc::vec::Vec;

use super::linalg::{CholeskyFactor, SymmetricMatrix};
use super::SimGrid;
use crate::error::{Error, Result};
use crate::model::{Kernel, ModelSpec};
use crate::quadrature::{integrate, integrate_endpoint_power, integrate_with_breaks};

/// Relative tolerance for each covariance cell.
pub const DRIVER_REL_TOL: f64 = 1e-12;

/// Joint covariance of one factor's Gaussian driver on a grid with `n` steps.
///
/// Index `j ∈ 0..=n` is the Volterra value `M_{t_j} = ∫_0^{t_j} k(t_j - s) dW_s`;
/// index `n + l` for `l ∈ 1..=n` is the increment `W_{t_l} - W_{t_{l-1}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorCovariance {
    n_steps: usize,
    matrix: SymmetricMatrix,
}

impl FactorCovariance {
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn matrix(&self) -> &SymmetricMatrix {
        &self.matrix
    }

    pub fn volterra_index(&self, j: usize) -> usize {
        j
    }

    pub fn increment_index(&self, l: usize) -> usize {
        debug_assert!(l >= 1 && l <= self.n_steps);
        self.n_steps + l
    }

    /// `Var(M_{t_j}) = ∫_0^{t_j} k(u)² du`, the exact compensator.
    pub fn volterra_variance(&self, j: usize) -> f64 {
        self.matrix.get(j, j)
    }
}

/// Per-factor driver covariances; factors are independent, so the
/// cross-factor blocks are identically zero and are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverCovariance {
    grid: SimGrid,
    factors: Vec<FactorCovariance>,
}

impl DriverCovariance {
    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    pub fn factors(&self) -> &[FactorCovariance] {
        &self.factors
    }

    /// Entry of the full block-diagonal matrix, factor blocks in model order.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let dim = 2 * self.grid.n_steps() + 1;
        let (fr, fc) = (row / dim, col / dim);
        if fr != fc {
            return 0.0;
        }
        self.factors[fr].matrix.get(row % dim, col % dim)
    }

    pub fn dim(&self) -> usize {
        self.factors.len() * (2 * self.grid.n_steps() + 1)
    }
}

/// Breakpoints of a tabulated kernel seen through the shift `τ ↦ τ + d`.
fn shifted_nodes(kernel: &Kernel, d: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut pts = vec![lo];
    if let Kernel::Tabulated(table) = kernel {
        pts.extend(
            table
                .times()
                .iter()
                .map(|&t| t - d)
                .filter(|&t| t > lo && t < hi),
        );
    }
    pts.push(hi);
    pts
}

/// `∫_lo^hi k(τ) k(τ + d) dτ` on one grid cell.
fn product_cell(kernel: &Kernel, lo: f64, hi: f64, d: f64) -> Result<f64> {
    let res = match kernel {
        Kernel::Power { a, hurst } if lo == 0.0 => {
            if d == 0.0 {
                integrate_endpoint_power(|_| a * a, 2.0 * hurst - 1.0, 0.0, hi, DRIVER_REL_TOL)?
            } else {
                integrate_endpoint_power(
                    |t| a * kernel.value(t + d),
                    hurst - 0.5,
                    0.0,
                    hi,
                    DRIVER_REL_TOL,
                )?
            }
        }
        Kernel::Tabulated(_) => integrate_with_breaks(
            |t| kernel.value(t) * kernel.value(t + d),
            &shifted_nodes(kernel, d, lo, hi),
            DRIVER_REL_TOL,
        )?,
        _ => integrate(|t| kernel.value(t) * kernel.value(t + d), lo, hi, DRIVER_REL_TOL)?,
    };
    Ok(res.value)
}

/// `∫_lo^hi k(τ) dτ` on one grid cell.
fn kernel_cell(kernel: &Kernel, lo: f64, hi: f64) -> Result<f64> {
    match kernel {
        Kernel::Tabulated(_) => integrate_with_breaks(
            |t| kernel.value(t),
            &shifted_nodes(kernel, 0.0, lo, hi),
            DRIVER_REL_TOL,
        )
        .map(|r| r.value),
        _ => kernel.integral(lo, hi, DRIVER_REL_TOL),
    }
}

fn factor_covariance(kernel: &Kernel, grid: &SimGrid) -> Result<FactorCovariance> {
    let n = grid.n_steps();
    let dt = grid.step();
    let mut matrix = SymmetricMatrix::zeros(2 * n + 1);

    // Cov(M_{t_j}, M_{t_{j+lag}}) = Σ_{m=1}^{j} ∫_{t_{m-1}}^{t_m} k(τ) k(τ + lag Δ) dτ,
    // built up cell by cell along each lag.
    for lag in 0..n {
        let d = lag as f64 * dt;
        let mut acc = 0.0;
        for m in 1..=n - lag {
            acc += product_cell(kernel, grid.time(m - 1), grid.time(m), d)?;
            matrix.set(m, m + lag, acc);
        }
    }

    // Cov(M_{t_j}, ΔW_l) = ∫_{(j-l)Δ}^{(j-l+1)Δ} k for l ≤ j, zero otherwise.
    let cells = (0..n)
        .map(|lag| kernel_cell(kernel, grid.time(lag), grid.time(lag + 1)))
        .collect::<Result<Vec<_>>>()?;
    for j in 1..=n {
        for l in 1..=j {
            matrix.set(j, n + l, cells[j - l]);
        }
    }

    for l in 1..=n {
        matrix.set(n + l, n + l, dt);
    }
    Ok(FactorCovariance { n_steps: n, matrix })
}

/// Joint covariance of all Volterra values and Brownian increments on the grid.
pub fn build_driver_covariance(model: &ModelSpec, grid: &SimGrid) -> Result<DriverCovariance> {
    let h = model.horizon();
    if (grid.horizon() - h).abs() > 1e-12 * h {
        return Err(Error::domain("simulation grid must span the model horizon"));
    }
    let factors = model
        .factors()
        .iter()
        .map(|f| factor_covariance(&f.kernel, grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(DriverCovariance {
        grid: *grid,
        factors,
    })
}

/// Factorized driver: everything the path loop needs.
#[derive(Debug, Clone)]
pub struct Driver {
    pub(crate) grid: SimGrid,
    pub(crate) rhos: Vec<f64>,
    pub(crate) rho_perp: f64,
    pub(crate) factors: Vec<CholeskyFactor>,
    /// `Σ_i Var(M^i_{t_j})` for `j ∈ 0..=n`.
    pub(crate) compensator: Vec<f64>,
    /// `log V_0(t_j)` for `j ∈ 0..=n`.
    pub(crate) log_forward: Vec<f64>,
}

impl Driver {
    pub fn new(model: &ModelSpec, grid: &SimGrid) -> Result<Self> {
        let cov = build_driver_covariance(model, grid)?;
        Self::from_covariance(model, &cov)
    }

    pub fn from_covariance(model: &ModelSpec, cov: &DriverCovariance) -> Result<Self> {
        let grid = cov.grid;
        let n = grid.n_steps();
        let mut compensator = vec![0.0; n + 1];
        for f in &cov.factors {
            for (j, c) in compensator.iter_mut().enumerate() {
                *c += f.volterra_variance(j);
            }
        }
        let factors = cov
            .factors
            .iter()
            .map(|f| CholeskyFactor::new(&f.matrix))
            .collect::<Result<Vec<_>>>()?;
        let rhos: Vec<f64> = model.factors().iter().map(|f| f.rho).collect();
        let rho_sq: f64 = rhos.iter().map(|r| r * r).sum();
        let log_forward = (0..=n)
            .map(|j| libm::log(model.curve().value(grid.time(j))))
            .collect();
        Ok(Self {
            grid,
            rhos,
            rho_perp: libm::sqrt(1.0 - rho_sq),
            factors,
            compensator,
            log_forward,
        })
    }

    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    /// Largest diagonal jitter any factor needed.
    pub fn jitter(&self) -> f64 {
        self.factors.iter().map(|f| f.jitter()).fold(0.0, f64::max)
    }

    pub(crate) fn factor_dim(&self) -> usize {
        2 * self.grid.n_steps() + 1
    }
}
