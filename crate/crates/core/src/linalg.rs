//! Row-major dense matrix and the three product kernels the recurrent layers
//! need. Every kernel accumulates in a fixed loop order so results are
//! bitwise reproducible and independent of batch composition.

use std::ops::Range;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix { rows, cols, data: vec![value; rows * cols] }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn zeros_like(&self) -> Self {
        Matrix::zeros(self.rows, self.cols)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// Element-wise product.
    pub fn hadamard(&self, other: &Matrix) -> Self {
        debug_assert_eq!(self.shape(), other.shape());
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// `out[b][offset + (g - rows.start)] += Σ_k x[b][k] · w[g][k]` for `g ∈ rows`.
///
/// That is `out += x · w[rows]ᵀ` written into a column block of `out`.
pub fn add_x_wt(out: &mut Matrix, offset: usize, x: &Matrix, w: &Matrix, rows: Range<usize>) {
    debug_assert_eq!(x.cols(), w.cols());
    debug_assert_eq!(x.rows(), out.rows());
    for b in 0..x.rows() {
        let xb = x.row(b);
        let ob = out.row_mut(b);
        for (slot, g) in rows.clone().enumerate() {
            let wg = w.row(g);
            let mut acc = 0.0;
            for k in 0..xb.len() {
                acc += xb[k] * wg[k];
            }
            ob[offset + slot] += acc;
        }
    }
}

/// `dw[g][k] += Σ_b da[b][offset + (g - rows.start)] · x[b][k]` for `g ∈ rows`.
///
/// That is `dw[rows] += da_blockᵀ · x`.
pub fn add_at_x(dw: &mut Matrix, rows: Range<usize>, da: &Matrix, offset: usize, x: &Matrix) {
    debug_assert_eq!(da.rows(), x.rows());
    debug_assert_eq!(dw.cols(), x.cols());
    let cols = x.cols();
    for (slot, g) in rows.enumerate() {
        let dwg = dw.row_mut(g);
        for b in 0..x.rows() {
            let a = da.get(b, offset + slot);
            if a == 0.0 {
                continue;
            }
            let xb = x.row(b);
            for k in 0..cols {
                dwg[k] += a * xb[k];
            }
        }
    }
}

/// `dx[b][k] += Σ_g da[b][offset + (g - rows.start)] · w[g][k]` for `g ∈ rows`.
///
/// That is `dx += da_block · w[rows]`.
pub fn add_a_w(dx: &mut Matrix, da: &Matrix, offset: usize, w: &Matrix, rows: Range<usize>) {
    debug_assert_eq!(dx.cols(), w.cols());
    debug_assert_eq!(dx.rows(), da.rows());
    for b in 0..da.rows() {
        let dab = da.row(b);
        let dxb = dx.row_mut(b);
        for (slot, g) in rows.clone().enumerate() {
            let a = dab[offset + slot];
            if a == 0.0 {
                continue;
            }
            let wg = w.row(g);
            for k in 0..wg.len() {
                dxb[k] += a * wg[k];
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
