//! Coordinate-list sparse matrices.
//!
//! These hold the normalized adjacency operators Â = D^{-1/2}(A+I)D^{-1/2};
//! they are constants in the computation graph and are never trained.

use crate::error::{CademError, Result};
use ndarray::Array2;

/// Sparse real matrix in coordinate form, sorted by (row, col).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    /// Build from coordinate entries. Rejects out-of-bounds indices and
    /// duplicate (row, col) pairs.
    pub fn from_entries(
        n_rows: usize,
        n_cols: usize,
        mut entries: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(r, c, _) in &entries {
            if r >= n_rows || c >= n_cols {
                return Err(CademError::InvalidArgument(format!(
                    "sparse entry ({r},{c}) out of bounds for {n_rows}x{n_cols}"
                )));
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(CademError::InvalidArgument(format!(
                    "duplicate sparse entry at ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            entries,
        })
    }

    /// Identity pattern of size n.
    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            entries: (0..n).map(|i| (i, i, 1.0)).collect(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        self.entries
            .iter()
            .all(|&(r, c, w)| (self.get(c, r) - w).abs() <= tol)
    }

    fn get(&self, r: usize, c: usize) -> f64 {
        match self
            .entries
            .binary_search_by(|&(er, ec, _)| (er, ec).cmp(&(r, c)))
        {
            Ok(i) => self.entries[i].2,
            Err(_) => 0.0,
        }
    }

    /// y = self · x for dense x.
    pub fn mul_dense(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.n_cols {
            return Err(CademError::Shape(format!(
                "sparse {}x{} times dense {}x{}",
                self.n_rows,
                self.n_cols,
                x.nrows(),
                x.ncols()
            )));
        }
        let mut y = Array2::zeros((self.n_rows, x.ncols()));
        for &(r, c, w) in &self.entries {
            let src = x.row(c);
            let mut dst = y.row_mut(r);
            dst.scaled_add(w, &src);
        }
        Ok(y)
    }

    /// y = selfᵀ · x for dense x.
    pub fn transpose_mul_dense(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.n_rows {
            return Err(CademError::Shape(format!(
                "sparse-transpose {}x{} times dense {}x{}",
                self.n_cols,
                self.n_rows,
                x.nrows(),
                x.ncols()
            )));
        }
        let mut y = Array2::zeros((self.n_cols, x.ncols()));
        for &(r, c, w) in &self.entries {
            let src = x.row(r);
            let mut dst = y.row_mut(c);
            dst.scaled_add(w, &src);
        }
        Ok(y)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.n_rows, self.n_cols));
        for &(r, c, w) in &self.entries {
            d[[r, c]] = w;
        }
        d
    }
}
