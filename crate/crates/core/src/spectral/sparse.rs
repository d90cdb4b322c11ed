use std::fmt;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// A fixed linear map applied to dense row-major feature matrices. Never
/// differentiated; the tape only needs `apply` and its adjoint.
pub trait LinearOperator: Send + Sync + fmt::Debug {
    /// `(output rows, input rows)`.
    fn shape(&self) -> (usize, usize);

    fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64>;

    fn apply_adjoint(&self, g: ArrayView2<'_, f64>) -> Array2<f64>;

    fn check_input(&self, rows: usize) -> Result<()> {
        let (_, cols) = self.shape();
        if cols != rows {
            return Err(Error::Shape(format!(
                "operator of shape {:?} applied to {rows} rows",
                self.shape()
            )));
        }
        Ok(())
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseOperator {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= rows || *c >= cols) {
            return Err(Error::Shape(format!("entry ({r}, {c}) outside {rows}x{cols}")));
        }
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        let mut op = Self {
            rows,
            cols,
            indptr,
            indices,
            values,
            symmetric: false,
        };
        op.symmetric = rows == cols && op.is_symmetric_within(1e-12);
        Ok(op)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
            symmetric: true,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
            symmetric: rows == cols,
        }
    }

    pub fn from_dense(a: &Array2<f64>) -> Self {
        let triplets = a
            .indexed_iter()
            .filter(|(_, v)| **v != 0.0)
            .map(|((r, c), v)| (r, c, *v))
            .collect();
        Self::from_triplets(a.nrows(), a.ncols(), triplets).expect("indices in range")
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

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.rows, self.cols));
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                a[[r, c]] = v;
            }
        }
        a
    }

    pub fn transpose(&self) -> Self {
        let triplets = (0..self.rows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (c, r, v)))
            .collect();
        Self::from_triplets(self.cols, self.rows, triplets).expect("indices in range")
    }

    fn is_symmetric_within(&self, tol: f64) -> bool {
        (0..self.rows).all(|r| self.row(r).all(|(c, v)| (v - self.get(c, r)).abs() <= tol))
    }

    /// Exact sparse-dense product `A X`.
    pub fn spmm(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.cols {
            return Err(Error::Shape(format!(
                "spmm: {}x{} operator times {}x{} matrix",
                self.rows,
                self.cols,
                x.nrows(),
                x.ncols()
            )));
        }
        Ok(self.spmm_unchecked(x))
    }

    fn spmm_unchecked(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let d = x.ncols();
        let mut out = Array2::<f64>::zeros((self.rows, d));
        if d == 0 {
            return out;
        }
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        out.as_slice_mut()
            .expect("fresh array is contiguous")
            .par_chunks_mut(d)
            .with_min_len(256)
            .enumerate()
            .for_each(|(r, acc)| {
                for (c, v) in self.row(r) {
                    let src = &xs[c * d..(c + 1) * d];
                    for (a, s) in acc.iter_mut().zip(src) {
                        *a += v * s;
                    }
                }
            });
        out
    }
}

impl LinearOperator for SparseOperator {
    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.spmm_unchecked(x)
    }

    fn apply_adjoint(&self, g: ArrayView2<'_, f64>) -> Array2<f64> {
        if self.symmetric {
            self.spmm_unchecked(g)
        } else {
            self.transpose().spmm_unchecked(g)
        }
    }
}

/// A dense operator such as an exact wavelet transform.
#[derive(Debug, Clone)]
pub struct DenseOperator(pub Array2<f64>);

impl LinearOperator for DenseOperator {
    fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.0.dot(&x)
    }

    fn apply_adjoint(&self, g: ArrayView2<'_, f64>) -> Array2<f64> {
        self.0.t().dot(&g)
    }
}
