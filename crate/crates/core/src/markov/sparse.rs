//! Compressed sparse row storage with the handful of products the model
//! needs. Vectors are row vectors: products are `v · A`.

use crate::error::{ModelError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<S> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<S>,
}

impl<S: Scalar> SparseMatrix<S> {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, S)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<S> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(
                r < rows && c < cols,
                "triplet ({r}, {c}) outside {rows}x{cols}"
            );
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") = *values.last().unwrap() + v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut m = Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        };
        m.drop_zeros();
        m
    }

    fn drop_zeros(&mut self) {
        if self.values.iter().all(|v| !v.is_zero()) {
            return;
        }
        let mut triplets = Vec::with_capacity(self.values.len());
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                if !v.is_zero() {
                    triplets.push((r, c, v));
                }
            }
        }
        *self = Self::from_triplets(self.rows, self.cols, triplets);
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_triplets(rows, cols, Vec::new())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, S::one())).collect())
    }

    pub fn from_dense(rows: &[Vec<S>]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let triplets = rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &v)| (i, j, v)))
            .collect();
        Self::from_triplets(n, m, triplets)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Non-zero entries of row `r` as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, S)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => S::zero(),
        }
    }

    pub fn row_sum(&self, r: usize) -> S {
        self.row(r).map(|(_, v)| v).sum()
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    /// `out = v · A`.
    pub fn left_mul_into(&self, v: &[S], out: &mut [S]) {
        assert_eq!(v.len(), self.rows);
        assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|x| *x = S::zero());
        for (r, &vr) in v.iter().enumerate() {
            if vr.is_zero() {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.col_idx[k]] = out[self.col_idx[k]] + vr * self.values[k];
            }
        }
    }

    pub fn left_mul(&self, v: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.cols];
        self.left_mul_into(v, &mut out);
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<S>> {
        let mut d = vec![vec![S::zero(); self.cols]; self.rows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }

    /// Entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, S)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// `I + A / scale`, used for uniformization.
    pub(crate) fn identity_plus_scaled(&self, scale: S) -> Self {
        let mut triplets: Vec<_> = self.triplets().map(|(r, c, v)| (r, c, v / scale)).collect();
        triplets.extend((0..self.rows).map(|i| (i, i, S::one())));
        Self::from_triplets(self.rows, self.cols, triplets)
    }
}

/// Row-stochastic matrix (`H`, `G`, fixed-length chains).
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix<S>(SparseMatrix<S>);

impl<S: Scalar> TransitionMatrix<S> {
    /// Accepts a square non-negative matrix whose rows sum to one within
    /// `tol`.
    pub fn new(m: SparseMatrix<S>, tol: S) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(ModelError::DimensionMismatch {
                expected: m.rows(),
                got: m.cols(),
            });
        }
        for r in 0..m.rows() {
            if m.row(r).any(|(_, v)| v < S::zero()) {
                return Err(ModelError::NotAGenerator {
                    row: r,
                    reason: "has a negative transition probability".into(),
                });
            }
            let s = m.row_sum(r);
            if (s - S::one()).abs() > tol {
                return Err(ModelError::NotAGenerator {
                    row: r,
                    reason: format!("sums to {s}, expected 1"),
                });
            }
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &SparseMatrix<S> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn apply(&self, v: &[S]) -> Vec<S> {
        self.0.left_mul(v)
    }
}

/// CTMC (sub-)generator: non-negative off-diagonals, row sums at most zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix<S>(SparseMatrix<S>);

/// Slack allowed on a row sum before a matrix is rejected as creating mass.
pub const ROW_SUM_SLACK: f64 = 1e-9;

impl<S: Scalar> RateMatrix<S> {
    pub fn new(m: SparseMatrix<S>) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(ModelError::DimensionMismatch {
                expected: m.rows(),
                got: m.cols(),
            });
        }
        for r in 0..m.rows() {
            if let Some((c, v)) = m.row(r).find(|&(c, v)| c != r && v < S::zero()) {
                return Err(ModelError::NotAGenerator {
                    row: r,
                    reason: format!("has negative off-diagonal rate {v} in column {c}"),
                });
            }
            let s = m.row_sum(r);
            if s.is_nan() || s > S::lit(ROW_SUM_SLACK) {
                return Err(ModelError::NotAGenerator {
                    row: r,
                    reason: format!("sums to {s} > 0"),
                });
            }
        }
        Ok(Self(m))
    }

    pub fn from_dense(rows: &[Vec<S>]) -> Result<Self> {
        Self::new(SparseMatrix::from_dense(rows))
    }

    pub fn matrix(&self) -> &SparseMatrix<S> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.0.get(r, c)
    }

    /// `max_i |A_ii|`, the uniformization rate.
    pub fn max_exit_rate(&self) -> S {
        (0..self.dim())
            .map(|i| self.0.get(i, i).abs())
            .fold(S::zero(), S::max)
    }

    pub fn max_abs_row_sum(&self) -> S {
        (0..self.dim())
            .map(|i| self.0.row_sum(i).abs())
            .fold(S::zero(), S::max)
    }

    pub fn is_conservative(&self, tol: S) -> bool {
        self.max_abs_row_sum() <= tol
    }
}
