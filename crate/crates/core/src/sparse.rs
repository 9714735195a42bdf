//! Compressed sparse row storage for session and partial-session matrices.

use crate::dense::DenseMatrix;
use crate::scalar::Scalar;

/// Sparse `rows x cols` matrix in CSR layout. Column indices within a row are
/// strictly increasing; stored weights are nonzero.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionMatrix<T> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SessionMatrix<T> {
    pub fn empty(cols: usize) -> Self {
        Self {
            rows: 0,
            cols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Appends a row. Entries may arrive in any order; duplicate columns are
    /// merged by `merge`. Zero weights are dropped.
    pub fn push_row(
        &mut self,
        entries: impl IntoIterator<Item = (usize, T)>,
        merge: impl Fn(T, T) -> T,
    ) {
        let mut row: Vec<(usize, T)> = entries.into_iter().collect();
        row.sort_by_key(|&(c, _)| c);
        let start = self.indices.len();
        for (c, w) in row {
            assert!(c < self.cols, "column {c} out of range {}", self.cols);
            if self.indices.len() > start && *self.indices.last().unwrap() == c {
                let last = self.values.last_mut().unwrap();
                *last = merge(*last, w);
            } else {
                self.indices.push(c);
                self.values.push(w);
            }
        }
        // drop explicit zeros so the stored pattern is the support
        let mut write = start;
        for read in start..self.indices.len() {
            if self.values[read] != T::zero() {
                self.indices[write] = self.indices[read];
                self.values[write] = self.values[read];
                write += 1;
            }
        }
        self.indices.truncate(write);
        self.values.truncate(write);
        self.indptr.push(self.indices.len());
        self.rows += 1;
    }

    pub fn from_rows<I, R>(cols: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = (usize, T)>,
    {
        let mut m = Self::empty(cols);
        for r in rows {
            m.push_row(r, |a, _| a);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Column indices and weights of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (idx, val) = self.row(i);
        idx.iter().copied().zip(val.iter().copied())
    }

    pub fn row_sum(&self, i: usize) -> T {
        self.row(i).1.iter().copied().sum()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (idx, val) = self.row(i);
        match idx.binary_search(&j) {
            Ok(p) => val[p],
            Err(_) => T::zero(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, w) in self.row_entries(i) {
                d[(i, j)] = w;
            }
        }
        d
    }

    /// `Xᵀ X`, accumulated row by row over each row's support.
    pub fn gram(&self) -> DenseMatrix<T> {
        self.cross_gram(self)
    }

    /// `Xᵀ Z` for a matrix with the same number of rows.
    pub fn cross_gram(&self, other: &Self) -> DenseMatrix<T> {
        assert_eq!(self.rows, other.rows, "row counts must agree");
        let mut out = DenseMatrix::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let (zi, zv) = other.row(r);
            for (a, wa) in self.row_entries(r) {
                let out_row = out.row_mut(a);
                for (&b, &wb) in zi.iter().zip(zv) {
                    out_row[b] += wa * wb;
                }
            }
        }
        out
    }

    /// Sparse-times-dense product `X B`.
    pub fn mul_dense(&self, rhs: &DenseMatrix<T>) -> DenseMatrix<T> {
        assert_eq!(self.cols, rhs.rows(), "inner dimensions must agree");
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols());
        for i in 0..self.rows {
            let (idx, val) = self.row(i);
            let out_row = out.row_mut(i);
            for (&k, &w) in idx.iter().zip(val) {
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += w * b;
                }
            }
        }
        out
    }

    pub(crate) fn scale_row(&mut self, i: usize, factor: T) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        for v in &mut self.values[a..b] {
            *v *= factor;
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}
