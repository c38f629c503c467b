use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::driver::Driver;
use super::estimators::McEstimate;
use super::{SimConfig, SimGrid};
use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Samples per random-number block (pairs when antithetic).
pub const BLOCK_SIZE: usize = 2048;

/// Simulated terminal log-prices and integrated variances at one ε.
///
/// With antithetic sampling the two paths of a pair sit next to each other.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub spot: f64,
    pub eps: f64,
    pub seed: u64,
    pub antithetic: bool,
    pub grid: SimGrid,
    pub terminal_log_price: Vec<f64>,
    /// `∫_0^T V_t dt` by the trapezoid rule on the grid.
    pub integrated_variance: Vec<f64>,
    /// Sample mean of `V_{t_j}` for `j = 0..=n_steps`.
    pub variance_mean: Vec<f64>,
    pub variance_std_error: Vec<f64>,
}

impl PathBundle {
    pub fn n_paths(&self) -> usize {
        self.terminal_log_price.len()
    }

    /// Independent samples: pairs when antithetic, paths otherwise.
    pub fn n_samples(&self) -> usize {
        if self.antithetic {
            self.n_paths() / 2
        } else {
            self.n_paths()
        }
    }

    fn paths_per_sample(&self) -> usize {
        if self.antithetic {
            2
        } else {
            1
        }
    }

    /// Mean of `f(log S_T, ∫V)` with a standard error that treats each
    /// antithetic pair as one sample.
    pub fn estimate<F: Fn(f64, f64) -> f64>(&self, f: F) -> McEstimate {
        let per = self.paths_per_sample();
        let samples: Vec<f64> = self
            .terminal_log_price
            .chunks_exact(per)
            .zip(self.integrated_variance.chunks_exact(per))
            .map(|(x, iv)| {
                let s: f64 = x.iter().zip(iv).map(|(&x, &iv)| f(x, iv)).sum();
                s / per as f64
            })
            .collect();
        McEstimate::from_samples(&samples, self.seed)
    }

    pub fn put(&self, strike: f64) -> McEstimate {
        self.estimate(|x, _| (strike - libm::exp(x)).max(0.0))
    }

    pub fn terminal_price(&self) -> McEstimate {
        self.estimate(|x, _| libm::exp(x))
    }

    pub fn mean_integrated_variance(&self) -> McEstimate {
        self.estimate(|_, iv| iv)
    }
}

fn check_config(config: &SimConfig, eps_list: &[f64]) -> Result<()> {
    if config.n_paths < 2 {
        return Err(Error::domain("need at least 2 samples for a standard error"));
    }
    if eps_list.is_empty() || eps_list.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::domain("eps values must be finite and nonnegative"));
    }
    Ok(())
}

/// Paths at the model's own ε.
pub fn simulate_paths(model: &ModelSpec, grid: &SimGrid, config: &SimConfig) -> Result<PathBundle> {
    let mut out = simulate_paths_crn(model, &[model.eps()], grid, config)?;
    Ok(out.remove(0))
}

/// One bundle per ε, all driven by the same Gaussian draws.
pub fn simulate_paths_crn(
    model: &ModelSpec,
    eps_list: &[f64],
    grid: &SimGrid,
    config: &SimConfig,
) -> Result<Vec<PathBundle>> {
    check_config(config, eps_list)?;
    let driver = Driver::new(model, grid)?;
    simulate_with_driver(&driver, model.spot(), eps_list, config)
}

struct BlockOut {
    log_price: Vec<Vec<f64>>,
    integrated: Vec<Vec<f64>>,
    profile_sum: Vec<Vec<f64>>,
    profile_sq: Vec<Vec<f64>>,
}

/// Runs the path loop on an already factorized driver.
pub fn simulate_with_driver(
    driver: &Driver,
    spot: f64,
    eps_list: &[f64],
    config: &SimConfig,
) -> Result<Vec<PathBundle>> {
    check_config(config, eps_list)?;
    if !(spot > 0.0 && spot.is_finite()) {
        return Err(Error::domain("spot must be positive"));
    }
    let n_blocks = config.n_paths.div_ceil(BLOCK_SIZE);
    let run = |b: usize| run_block(driver, spot, eps_list, config, b);
    #[cfg(feature = "parallel")]
    let blocks: Vec<BlockOut> = (0..n_blocks).into_par_iter().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let blocks: Vec<BlockOut> = (0..n_blocks).map(run).collect();

    let n = driver.grid.n_steps();
    let per = if config.antithetic { 2 } else { 1 };
    let ns = config.n_paths as f64;
    let bundles = eps_list
        .iter()
        .enumerate()
        .map(|(e, &eps)| {
            let mut terminal_log_price = Vec::with_capacity(config.n_paths * per);
            let mut integrated_variance = Vec::with_capacity(config.n_paths * per);
            let mut sum = vec![0.0; n + 1];
            let mut sq = vec![0.0; n + 1];
            for blk in &blocks {
                terminal_log_price.extend_from_slice(&blk.log_price[e]);
                integrated_variance.extend_from_slice(&blk.integrated[e]);
                for j in 0..=n {
                    sum[j] += blk.profile_sum[e][j];
                    sq[j] += blk.profile_sq[e][j];
                }
            }
            let variance_mean: Vec<f64> = sum.iter().map(|s| s / ns).collect();
            let variance_std_error = sq
                .iter()
                .zip(&variance_mean)
                .map(|(q, m)| {
                    let var = ((q - ns * m * m) / (ns - 1.0)).max(0.0);
                    libm::sqrt(var / ns)
                })
                .collect();
            PathBundle {
                spot,
                eps,
                seed: config.seed,
                antithetic: config.antithetic,
                grid: driver.grid,
                terminal_log_price,
                integrated_variance,
                variance_mean,
                variance_std_error,
            }
        })
        .collect();
    Ok(bundles)
}

/// Simulates samples `[b·BLOCK_SIZE, min((b+1)·BLOCK_SIZE, n_paths))`.
///
/// Per sample, normals are consumed factor by factor (`2n + 1` each, fed
/// through that factor's Cholesky factor), then `n` for `W^⊥`.
fn run_block(driver: &Driver, spot: f64, eps_list: &[f64], config: &SimConfig, b: usize) -> BlockOut {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(b as u64);

    let n = driver.grid.n_steps();
    let dt = driver.grid.step();
    let dim = driver.factor_dim();
    let start = b * BLOCK_SIZE;
    let count = BLOCK_SIZE.min(config.n_paths - start);
    let signs: &[f64] = if config.antithetic { &[1.0, -1.0] } else { &[1.0] };
    let n_eps = eps_list.len();

    // log V_0(t_j) - ε²/2 Σ_i Var(M^i_{t_j})
    let bases: Vec<Vec<f64>> = eps_list
        .iter()
        .map(|&eps| {
            driver
                .log_forward
                .iter()
                .zip(&driver.compensator)
                .map(|(lf, c)| lf - 0.5 * eps * eps * c)
                .collect()
        })
        .collect();

    let mut out = BlockOut {
        log_price: vec![Vec::with_capacity(count * signs.len()); n_eps],
        integrated: vec![Vec::with_capacity(count * signs.len()); n_eps],
        profile_sum: vec![vec![0.0; n + 1]; n_eps],
        profile_sq: vec![vec![0.0; n + 1]; n_eps],
    };

    let mut z = vec![0.0; dim];
    let mut x = vec![0.0; dim];
    let mut sum_m = vec![0.0; n + 1];
    let mut db = vec![0.0; n];
    let mut v = vec![0.0; n + 1];
    let mut v_avg = vec![0.0; n + 1];
    let perp = driver.rho_perp * libm::sqrt(dt);
    let log_spot = libm::log(spot);

    for _ in 0..count {
        sum_m.fill(0.0);
        db.fill(0.0);
        for (factor, &rho) in driver.factors.iter().zip(&driver.rhos) {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            factor.mul_vec(&z, &mut x);
            for (s, xi) in sum_m.iter_mut().zip(&x[..=n]) {
                *s += xi;
            }
            for (d, xi) in db.iter_mut().zip(&x[n + 1..]) {
                *d += rho * xi;
            }
        }
        for d in db.iter_mut() {
            let w: f64 = StandardNormal.sample(&mut rng);
            *d += perp * w;
        }

        for (e, &eps) in eps_list.iter().enumerate() {
            let base = &bases[e];
            v_avg.fill(0.0);
            for &sign in signs {
                let se = sign * eps;
                for j in 0..=n {
                    v[j] = libm::exp(base[j] + se * sum_m[j]);
                }
                let mut log_s = log_spot;
                let mut iv = 0.0;
                for j in 0..n {
                    log_s += -0.5 * v[j] * dt + libm::sqrt(v[j]) * sign * db[j];
                    iv += 0.5 * (v[j] + v[j + 1]) * dt;
                }
                out.log_price[e].push(log_s);
                out.integrated[e].push(iv);
                for (a, vj) in v_avg.iter_mut().zip(&v) {
                    *a += vj;
                }
            }
            let inv = 1.0 / signs.len() as f64;
            for j in 0..=n {
                let s = v_avg[j] * inv;
                out.profile_sum[e][j] += s;
                out.profile_sq[e][j] += s * s;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bs::{put_price, BsQuote};
    use crate::model::{Factor, ForwardVarianceCurve, Kernel};

    fn rough(eps: f64) -> ModelSpec {
        ModelSpec::new(
            100.0,
            1.0,
            eps,
            vec![Factor::new(-0.7, Kernel::power(1.0, 0.1).unwrap())],
            ForwardVarianceCurve::flat(0.04).unwrap(),
        )
        .unwrap()
    }

    fn grid(n: usize) -> SimGrid {
        SimGrid::new(1.0, n).unwrap()
    }

    #[test]
    fn deterministic_given_seed() {
        let m = rough(0.3);
        let cfg = SimConfig::new(3000, 7);
        let a = simulate_paths(&m, &grid(10), &cfg).unwrap();
        let b = simulate_paths(&m, &grid(10), &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate_paths(&m, &grid(10), &SimConfig::new(3000, 8)).unwrap();
        assert_ne!(a.terminal_log_price, c.terminal_log_price);
        assert_eq!(a.n_paths(), 6000);
        assert_eq!(a.n_samples(), 3000);
    }

    #[test]
    fn prefix_of_a_larger_run_is_identical() {
        // Blocks draw from their own streams, so adding paths never
        // perturbs the earlier ones.
        let m = rough(0.2);
        let small = simulate_paths(&m, &grid(8), &SimConfig::new(BLOCK_SIZE + 10, 3)).unwrap();
        let large = simulate_paths(&m, &grid(8), &SimConfig::new(3 * BLOCK_SIZE, 3)).unwrap();
        let k = small.n_paths();
        assert_eq!(small.terminal_log_price[..k], large.terminal_log_price[..k]);
    }

    #[test]
    fn antithetic_pairs_mirror_at_zero_eps() {
        let b = simulate_paths(&rough(0.0), &grid(6), &SimConfig::new(100, 1)).unwrap();
        let l0 = libm::log(100.0);
        for pair in b.terminal_log_price.chunks_exact(2) {
            // log S_T = log S_0 - v/2 ± √(v/n) Σ ΔB, so the pair is symmetric about log S_0 - v/2
            assert!(((pair[0] + pair[1]) / 2.0 - (l0 - 0.02)).abs() < 1e-12);
        }
        for iv in &b.integrated_variance {
            assert!((iv - 0.04).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_eps_is_lognormal() {
        let b = simulate_paths(&rough(0.0), &grid(4), &SimConfig::new(20_000, 11)).unwrap();
        for strike in [80.0, 100.0, 120.0] {
            let est = b.put(strike);
            let exact = put_price(&BsQuote::new(100.0, strike, 0.04).unwrap());
            assert!((est.mean - exact).abs() <= 3.0 * est.std_error, "K={strike}");
        }
    }

    #[test]
    fn martingale_and_compensator() {
        let crn = simulate_paths_crn(&rough(0.0), &[0.6, 0.3], &grid(16), &SimConfig::new(40_000, 5)).unwrap();
        for b in &crn {
            let s = b.terminal_price();
            assert!((s.mean - 100.0).abs() <= 3.0 * s.std_error, "eps={}", b.eps);
            for (j, (m, se)) in b.variance_mean.iter().zip(&b.variance_std_error).enumerate() {
                assert!((m - 0.04).abs() <= 3.5 * se.max(1e-15), "eps={} j={j}", b.eps);
            }
            assert!(b.integrated_variance.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn antithetic_does_not_inflate_put_variance() {
        let m = rough(0.3);
        // Same number of simulated paths in both runs.
        let anti = simulate_paths(&m, &grid(16), &SimConfig::new(10_000, 21)).unwrap().put(100.0);
        let plain = simulate_paths(&m, &grid(16), &SimConfig::new(20_000, 21).plain())
            .unwrap()
            .put(100.0);
        let joint = libm::sqrt(anti.std_error.powi(2) + plain.std_error.powi(2));
        assert!((anti.mean - plain.mean).abs() <= 3.0 * joint);
        assert!(anti.std_error <= plain.std_error * 1.02);
    }

    #[test]
    fn crn_bundles_share_draws() {
        let m = rough(0.2);
        let crn = simulate_paths_crn(&m, &[0.2, 0.0], &grid(8), &SimConfig::new(500, 9)).unwrap();
        let single = simulate_paths(&m, &grid(8), &SimConfig::new(500, 9)).unwrap();
        assert_eq!(crn[0].terminal_log_price, single.terminal_log_price);
        assert_eq!(crn[1].eps, 0.0);
    }

    #[test]
    fn rejects_bad_config() {
        let m = rough(0.2);
        assert!(simulate_paths(&m, &grid(8), &SimConfig::new(1, 0)).is_err());
        assert!(simulate_paths_crn(&m, &[-0.1], &grid(8), &SimConfig::new(10, 0)).is_err());
        assert!(SimGrid::new(1.0, 1).is_err());
    }
}
