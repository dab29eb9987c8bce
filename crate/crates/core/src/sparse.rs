//! Compressed sparse row storage.

use crate::error::{Error, Result};
use crate::scalar::{Scalar, C64};
use nalgebra::DMatrix;
use rayon::prelude::*;

const PAR_ROWS: usize = 8192;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<T> {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
    pub values: Vec<T>,
}

/// Row-at-a-time CSR builder. Duplicate columns within a row are summed and
/// exact zeros are dropped when the row is closed.
pub struct CsrBuilder<T> {
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<T>,
    pending: Vec<(usize, T)>,
}

impl<T: Scalar> CsrBuilder<T> {
    pub fn new(n_cols: usize) -> Self {
        Self {
            n_cols,
            row_offsets: vec![0],
            col_indices: Vec::new(),
            values: Vec::new(),
            pending: Vec::new(),
        }
    }

    pub fn with_capacity(n_cols: usize, rows: usize, nnz: usize) -> Self {
        let mut b = Self::new(n_cols);
        b.row_offsets.reserve(rows);
        b.col_indices.reserve(nnz);
        b.values.reserve(nnz);
        b
    }

    pub fn push(&mut self, col: usize, v: T) {
        debug_assert!(col < self.n_cols, "column {col} out of range");
        self.pending.push((col, v));
    }

    pub fn finish_row(&mut self) {
        self.pending.sort_by_key(|e| e.0);
        let mut i = 0;
        while i < self.pending.len() {
            let c = self.pending[i].0;
            let mut acc = self.pending[i].1;
            i += 1;
            while i < self.pending.len() && self.pending[i].0 == c {
                acc += self.pending[i].1;
                i += 1;
            }
            if acc != T::zero() {
                self.col_indices.push(c);
                self.values.push(acc);
            }
        }
        self.pending.clear();
        self.row_offsets.push(self.col_indices.len());
    }

    pub fn build(self) -> SparseMatrix<T> {
        SparseMatrix {
            n_rows: self.row_offsets.len() - 1,
            n_cols: self.n_cols,
            row_offsets: self.row_offsets,
            col_indices: self.col_indices,
            values: self.values,
        }
    }
}

impl<T: Scalar> SparseMatrix<T> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![T::one(); n])
    }

    pub fn diagonal(d: &[T]) -> Self {
        let mut b = CsrBuilder::with_capacity(d.len(), d.len(), d.len());
        for (i, v) in d.iter().enumerate() {
            b.push(i, *v);
            b.finish_row();
        }
        b.build()
    }

    /// Build from unordered `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); n_rows];
        for &(r, c, v) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::Layout(format!("triplet ({r},{c}) outside {n_rows}x{n_cols}")));
            }
            rows[r].push((c, v));
        }
        let mut b = CsrBuilder::with_capacity(n_cols, n_rows, triplets.len());
        for row in rows {
            for (c, v) in row {
                b.push(c, v);
            }
            b.finish_row();
        }
        Ok(b.build())
    }

    pub fn from_dense(a: &DMatrix<T>) -> Self
    where
        T: nalgebra::Scalar,
    {
        let mut b = CsrBuilder::new(a.ncols());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                b.push(j, a[(i, j)]);
            }
            b.finish_row();
        }
        b.build()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
        self.col_indices[s..e].iter().copied().zip(self.values[s..e].iter().copied())
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_offsets[i + 1] - self.row_offsets[i]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
        match self.col_indices[s..e].binary_search(&j) {
            Ok(k) => self.values[s + k],
            Err(_) => T::zero(),
        }
    }

    /// Structural invariants of the CSR arrays.
    pub fn validate(&self) -> Result<()> {
        if self.row_offsets.len() != self.n_rows + 1 {
            return Err(Error::Layout("row_offsets length".into()));
        }
        if self.row_offsets[0] != 0 || *self.row_offsets.last().unwrap() != self.col_indices.len() {
            return Err(Error::Layout("row_offsets endpoints".into()));
        }
        if self.col_indices.len() != self.values.len() {
            return Err(Error::Layout("col_indices and values differ in length".into()));
        }
        for i in 0..self.n_rows {
            let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
            if e < s {
                return Err(Error::Layout(format!("row_offsets decrease at row {i}")));
            }
            for k in s..e {
                if self.col_indices[k] >= self.n_cols {
                    return Err(Error::Layout(format!("column out of range in row {i}")));
                }
                if k > s && self.col_indices[k] <= self.col_indices[k - 1] {
                    return Err(Error::Layout(format!("unsorted or duplicate column in row {i}")));
                }
            }
        }
        Ok(())
    }

    /// `y = A x`
    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        let row = |(i, yi): (usize, &mut T)| {
            let mut acc = T::zero();
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *yi = acc;
        };
        // rows are independent, so the parallel result is bit-identical
        if self.n_rows >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(row);
        } else {
            y.iter_mut().enumerate().for_each(row);
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = Aᴴ x` without forming the adjoint.
    pub fn adjoint_matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n_rows);
        let mut y = vec![T::zero(); self.n_cols];
        for (i, xi) in x.iter().enumerate() {
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                y[self.col_indices[k]] += self.values[k].conj() * *xi;
            }
        }
        y
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.n_cols {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; self.nnz()];
        let mut vals = vec![T::zero(); self.nnz()];
        for i in 0..self.n_rows {
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                let c = self.col_indices[k];
                let dst = next[c];
                cols[dst] = i;
                vals[dst] = self.values[k].conj();
                next[c] += 1;
            }
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets: counts,
            col_indices: cols,
            values: vals,
        }
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v = s * *v;
        }
        out
    }

    /// `alpha A + beta B`
    pub fn linear_combination(&self, alpha: T, other: &Self, beta: T) -> Result<Self> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::Layout("shape mismatch in linear combination".into()));
        }
        let mut b = CsrBuilder::with_capacity(self.n_cols, self.n_rows, self.nnz() + other.nnz());
        for i in 0..self.n_rows {
            for (c, v) in self.row(i) {
                b.push(c, alpha * v);
            }
            for (c, v) in other.row(i) {
                b.push(c, beta * v);
            }
            b.finish_row();
        }
        Ok(b.build())
    }

    /// Largest `|A_ij - conj(A_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i).conj()).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<T>
    where
        T: nalgebra::Scalar,
    {
        let mut a = DMatrix::from_element(self.n_rows, self.n_cols, T::zero());
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                a[(i, j)] = v;
            }
        }
        a
    }

    pub fn to_dense_c64(&self) -> DMatrix<C64> {
        let mut a = DMatrix::from_element(self.n_rows, self.n_cols, C64::new(0.0, 0.0));
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                a[(i, j)] = v.to_c64();
            }
        }
        a
    }

    pub fn to_complex(&self) -> SparseMatrix<C64> {
        SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_offsets: self.row_offsets.clone(),
            col_indices: self.col_indices.clone(),
            values: self.values.iter().map(|v| v.to_c64()).collect(),
        }
    }
}
