use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Diagonal jitters tried, in order, when a pivot goes negative.
const JITTERS: [f64; 5] = [0.0, 1e-15, 1e-14, 1e-13, 1e-12];

/// Pivots below this fraction of the largest diagonal entry are treated as
/// exact zeros (degenerate rows such as the variance at time zero).
const ZERO_PIVOT: f64 = 1e-14;

/// Symmetric matrix stored as its packed lower triangle, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    data: Vec<f64>,
}

fn packed(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

impl SymmetricMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        self.data[packed(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        self.data[packed(i, j)] = value;
    }
}

/// Lower-triangular factor `L` with `L Lᵀ = A (+ jitter I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    dim: usize,
    data: Vec<f64>,
    jitter: f64,
}

impl CholeskyFactor {
    /// Factorizes a positive semidefinite matrix, escalating the diagonal
    /// jitter up to `1e-12` if rounding makes a pivot negative.
    pub fn new(a: &SymmetricMatrix) -> Result<Self> {
        let mut last_err = None;
        for jitter in JITTERS {
            match factorize(a, jitter) {
                Ok(data) => {
                    return Ok(Self {
                        dim: a.dim,
                        data,
                        jitter,
                    })
                }
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.unwrap_or(Error::Factorization {
            index: 0,
            pivot: f64::NAN,
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.data[packed(i, j)]
        }
    }

    /// `out = L z`.
    pub fn mul_vec(&self, z: &[f64], out: &mut [f64]) {
        debug_assert!(z.len() >= self.dim && out.len() >= self.dim);
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            let row = &self.data[packed(i, 0)..=packed(i, i)];
            *o = dot(row, &z[..=i]);
        }
    }
}

fn factorize(a: &SymmetricMatrix, jitter: f64) -> Result<Vec<f64>> {
    let n = a.dim;
    let max_diag = (0..n).map(|i| a.get(i, i)).fold(0.0_f64, f64::max);
    let zero = ZERO_PIVOT * max_diag;
    let mut l = vec![0.0; a.data.len()];
    for i in 0..n {
        for j in 0..=i {
            let (row_i, row_j) = (packed(i, 0), packed(j, 0));
            let s = a.get(i, j) - dot(&l[row_i..row_i + j], &l[row_j..row_j + j]);
            if i == j {
                let pivot = s + jitter;
                l[packed(i, i)] = if pivot > zero {
                    libm::sqrt(pivot)
                } else if pivot >= -zero {
                    0.0
                } else {
                    return Err(Error::Factorization { index: i, pivot });
                };
            } else {
                let d = l[packed(j, j)];
                l[packed(i, j)] = if d > 0.0 { s / d } else { 0.0 };
            }
        }
    }
    Ok(l)
}

/// Dot product with four independent accumulators so the loop vectorizes.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0_f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..n {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
