//! Dense square matrices for the simulator's seeded projections, plus the
//! seed-mixing helpers every deterministic stream derives from.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Stream tags keeping the per-purpose RNG streams disjoint.
pub(crate) const STREAM_PROJ_Q: u64 = 0x51;
pub(crate) const STREAM_PROJ_K: u64 = 0x4B;
pub(crate) const STREAM_PROJ_V: u64 = 0x56;
pub(crate) const STREAM_ENCODER: u64 = 0x45;
pub(crate) const STREAM_EMIT: u64 = 0x4D;
pub(crate) const STREAM_EPOCH: u64 = 0x50;
pub(crate) const STREAM_ADV: u64 = 0x41;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic sub-seed for `(master seed, stream, item)`.
pub(crate) fn sub_seed(seed: u64, stream: u64, item: u64) -> u64 {
    splitmix64(splitmix64(seed ^ stream.wrapping_mul(0xA076_1D64_78BD_642F)) ^ item.wrapping_mul(0xE703_7ED1_A0B4_28DB))
}

pub(crate) fn sub_rng(seed: u64, stream: u64, item: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, stream, item))
}

/// Row-major dense matrix applied to row vectors: `y = x * M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Square matrix with entries `(2u - 1) * sqrt(3 / n)` drawn row-major
    /// from the given rng, giving roughly norm-preserving projections.
    pub fn seeded_square(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = (3.0 / n as f64).sqrt();
        let data = (0..n * n).map(|_| (2.0 * rng.random::<f64>() - 1.0) * scale).collect();
        Self { rows: n, cols: n, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `y_j = sum_i x_i * m[i, j]`, accumulated row by row.
    pub fn apply_row(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (acc, &w) in y.iter_mut().zip(row) {
                *acc += xi * w;
            }
        }
        y
    }

    /// Gauss-Jordan inverse with partial pivoting.
    pub fn invert(&self) -> Result<Mat> {
        if self.rows != self.cols {
            return Err(Error::ShapeMismatch("can only invert square matrices".into()));
        }
        let n = self.rows;
        let mut a = self.data.clone();
        let mut inv = vec![0.0; n * n];
        for i in 0..n {
            inv[i * n + i] = 1.0;
        }
        for col in 0..n {
            let mut pivot = col;
            let mut best = a[col * n + col].abs();
            for row in col + 1..n {
                let v = a[row * n + col].abs();
                if v > best {
                    best = v;
                    pivot = row;
                }
            }
            if best < 1e-12 {
                return Err(Error::InvalidParameter("matrix is numerically singular".into()));
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                    inv.swap(col * n + j, pivot * n + j);
                }
            }
            let diag = a[col * n + col];
            for j in 0..n {
                a[col * n + j] /= diag;
                inv[col * n + j] /= diag;
            }
            for row in 0..n {
                if row == col {
                    continue;
                }
                let factor = a[row * n + col];
                if factor == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a[row * n + j] -= factor * a[col * n + j];
                    inv[row * n + j] -= factor * inv[col * n + j];
                }
            }
        }
        Mat::from_rows(n, n, inv)
    }
}

/// Per-layer fixed seeded QKV projection matrices.
#[derive(Debug, Clone)]
pub struct Projections {
    pub w_q: Vec<Mat>,
    pub w_k: Vec<Mat>,
    pub w_v: Vec<Mat>,
}

impl Projections {
    /// Derive the projection stack for `n_layers` layers of width `dim`
    /// from the master seed.
    pub fn derive(seed: u64, n_layers: usize, dim: usize) -> Self {
        let derive_role = |stream: u64| -> Vec<Mat> {
            (0..n_layers)
                .map(|layer| Mat::seeded_square(dim, &mut sub_rng(seed, stream, layer as u64)))
                .collect()
        };
        Self {
            w_q: derive_role(STREAM_PROJ_Q),
            w_k: derive_role(STREAM_PROJ_K),
            w_v: derive_role(STREAM_PROJ_V),
        }
    }
}
