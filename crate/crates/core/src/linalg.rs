//! Dense row-major matrices and the handful of kernels the heads need.
//!
//! Every kernel computes each output row independently and in a fixed
//! order, so the value of a row never depends on which other rows are in
//! the batch. The trainer relies on this to cache frozen-prefix activations
//! without changing results.

use serde::{Deserialize, Serialize};

use crate::error::{FdrError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(FdrError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(FdrError::DimensionMismatch {
                    expected: cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Columns `start..end` of every row.
    pub fn select_cols(&self, start: usize, end: usize) -> Matrix {
        assert!(start <= end && end <= self.cols);
        let mut data = Vec::with_capacity(self.rows * (end - start));
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[start..end]);
        }
        Matrix {
            rows: self.rows,
            cols: end - start,
            data,
        }
    }

    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(FdrError::DimensionMismatch {
                expected: self.cols,
                found: other.cols,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self · rhs + bias` (bias broadcast over rows).
    pub(crate) fn affine(&self, rhs: &Matrix, bias: &[f64]) -> Matrix {
        debug_assert_eq!(self.cols, rhs.rows);
        debug_assert_eq!(bias.len(), rhs.cols);
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let x = self.row(i);
            let o = out.row_mut(i);
            o.copy_from_slice(bias);
            for (k, &xk) in x.iter().enumerate() {
                if xk == 0.0 {
                    continue;
                }
                for (oj, &wj) in o.iter_mut().zip(rhs.row(k)) {
                    *oj += xk * wj;
                }
            }
        }
        out
    }

    /// `selfᵀ · rhs`, the weight gradient of an affine layer.
    pub(crate) fn transpose_matmul(&self, rhs: &Matrix) -> Matrix {
        debug_assert_eq!(self.rows, rhs.rows);
        let mut out = Matrix::zeros(self.cols, rhs.cols);
        for i in 0..self.rows {
            let x = self.row(i);
            let d = rhs.row(i);
            for (p, &xp) in x.iter().enumerate() {
                if xp == 0.0 {
                    continue;
                }
                for (oj, &dj) in out.row_mut(p).iter_mut().zip(d) {
                    *oj += xp * dj;
                }
            }
        }
        out
    }

    /// `self · rhsᵀ`, back-propagating a layer's output gradient to its input.
    pub(crate) fn matmul_transpose(&self, rhs: &Matrix) -> Matrix {
        debug_assert_eq!(self.cols, rhs.cols);
        let mut out = Matrix::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let d = self.row(i);
            let o = out.row_mut(i);
            for (p, op) in o.iter_mut().enumerate() {
                *op = d.iter().zip(rhs.row(p)).map(|(a, b)| a * b).sum();
            }
        }
        out
    }

    /// Column sums.
    pub(crate) fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out
    }
}
