//! Row-major dense matrices and a Cholesky factorization for SPD systems.

use std::ops::{Index, IndexMut};

use rayon::prelude::*;

use crate::error::LinalgError;
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds a matrix from row-major data. Panics if the length does not match.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must equal rows * cols");
        Self { rows, cols, data }
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Matrix product `self * rhs`. Each output row accumulates `self[i,k] * rhs[k,:]`
    /// in ascending `k`, skipping zero coefficients.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "inner dimensions must agree");
        let cols = rhs.cols;
        let mut out = Self::zeros(self.rows, cols);
        out.data
            .par_chunks_mut(cols.max(1))
            .enumerate()
            .for_each(|(i, out_row)| {
                for (k, &a) in self.row(i).iter().enumerate() {
                    if a == T::zero() {
                        continue;
                    }
                    for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                        *o += a * b;
                    }
                }
            });
        out
    }

    /// `Aᵀ A` accumulated row by row over the nonzero entries of each row.
    pub fn gram(&self) -> Self {
        self.cross_gram(self)
    }

    /// `Aᵀ C` for matrices with the same row count, accumulated row by row.
    pub fn cross_gram(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "row counts must agree");
        let mut out = Self::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let a_row = self.row(r);
            let c_row = other.row(r);
            for (a, &wa) in a_row.iter().enumerate() {
                if wa == T::zero() {
                    continue;
                }
                let out_row = out.row_mut(a);
                for (b, &wc) in c_row.iter().enumerate() {
                    if wc == T::zero() {
                        continue;
                    }
                    out_row[b] += wa * wc;
                }
            }
        }
        out
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise `a * self + b * other`.
    pub fn affine_mix(&self, a: T, other: &Self, b: T) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&x, &y)| a * x + b * y)
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |x, y| x + y)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |x, y| x - y)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&x, &y)| f(x, y)).collect(),
        }
    }

    /// Adds `value` to every diagonal entry in place.
    pub fn add_to_diagonal(&mut self, value: T) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += value;
        }
    }

    pub fn frobenius_norm(&self) -> T {
        self.squared_frobenius_norm().sqrt()
    }

    pub fn squared_frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&x, &y)| (x - y).abs())
            .fold(T::zero(), T::max)
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.rows).map(|i| self.row(i).iter().copied().sum()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts to another scalar type through `f64`.
    pub fn cast<U: Scalar>(&self) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    /// Cholesky factorization `A = L Lᵀ` of a symmetric positive-definite matrix.
    /// Only the lower triangle of `self` is read.
    pub fn cholesky(&self) -> Result<Cholesky<T>, LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let n = self.rows;
        let mut lower = Self::zeros(n, n);
        for j in 0..n {
            let mut pivot = self[(j, j)];
            for k in 0..j {
                pivot -= lower[(j, k)] * lower[(j, k)];
            }
            if !pivot.is_finite() || pivot <= T::zero() {
                return Err(LinalgError::NotPositiveDefinite {
                    pivot_index: j,
                    pivot_value: pivot.as_f64(),
                    diag_ratio: self.diagonal_ratio(),
                });
            }
            let d = pivot.sqrt();
            lower[(j, j)] = d;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= lower[(i, k)] * lower[(j, k)];
                }
                lower[(i, j)] = s / d;
            }
        }
        Ok(Cholesky { lower })
    }

    /// Ratio of largest to smallest diagonal magnitude; a cheap conditioning hint.
    fn diagonal_ratio(&self) -> f64 {
        let diag = self.diagonal();
        let max = diag.iter().map(|v| v.abs().as_f64()).fold(0.0, f64::max);
        let min = diag.iter().map(|v| v.abs().as_f64()).fold(f64::INFINITY, f64::min);
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    lower: DenseMatrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn dim(&self) -> usize {
        self.lower.rows
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.dim();
        assert_eq!(b.len(), n, "rhs length must equal dimension");
        let l = &self.lower;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[(i, k)] * b[k];
            }
            b[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= l[(k, i)] * b[k];
            }
            b[i] = s / l[(i, i)];
        }
    }

    /// Solves `A X = B` column by column; columns are independent so the
    /// result does not depend on the worker count.
    pub fn solve_matrix(&self, rhs: &DenseMatrix<T>) -> DenseMatrix<T> {
        let n = self.dim();
        assert_eq!(rhs.rows(), n, "rhs rows must equal dimension");
        let columns: Vec<Vec<T>> = (0..rhs.cols())
            .into_par_iter()
            .map(|j| {
                let mut col: Vec<T> = (0..n).map(|i| rhs[(i, j)]).collect();
                self.solve_in_place(&mut col);
                col
            })
            .collect();
        DenseMatrix::from_fn(n, rhs.cols(), |i, j| columns[j][i])
    }

    pub fn inverse(&self) -> DenseMatrix<T> {
        self.solve_matrix(&DenseMatrix::identity(self.dim()))
    }
}
