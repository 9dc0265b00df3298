//! Small dense linear-algebra helpers shared across modules.

use serde::{Deserialize, Serialize};

/// Squared Euclidean distance. Slices must have equal length.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

#[inline]
pub fn squared_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn nonzeros(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }
}

/// `out[r] = init[r] + sum_c w[r, c] * x[c]`, accumulated left to right.
///
/// Every affine map in the crate goes through this routine so that a random
/// projection and the FC layer initialised from it agree bit for bit.
pub fn affine_into(weight: &[f64], rows: usize, cols: usize, x: &[f64], init: &[f64], out: &mut [f64]) {
    debug_assert_eq!(weight.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    for r in 0..rows {
        let row = &weight[r * cols..(r + 1) * cols];
        let mut acc = init[r];
        for (w, xi) in row.iter().zip(x) {
            acc += w * xi;
        }
        out[r] = acc;
    }
}

/// `out[c] += sum_r w[r, c] * g[r]`.
pub fn transpose_mul_add(weight: &[f64], rows: usize, cols: usize, g: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let gr = g[r];
        if gr == 0.0 {
            continue;
        }
        let row = &weight[r * cols..(r + 1) * cols];
        for (o, w) in out.iter_mut().zip(row) {
            *o += w * gr;
        }
    }
}

/// Linear-interpolated quantile of an ascending slice (numpy's default rule).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
