//! Compressed-row storage for symmetric matrices.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

const PARALLEL_ROWS: usize = 4096;

/// Square sparse matrix stored in CSR form with both triangles present.
///
/// Entries are accumulated in `(row, col)` order with duplicates summed in
/// insertion order, so the stored values do not depend on thread count.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetricMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

/// Triplet accumulator for building Laplacians and other symmetric matrices.
#[derive(Debug, Clone, Default)]
pub struct TripletList {
    dim: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletList {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, capacity: usize) -> Self {
        Self {
            dim,
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    /// Adds the four Laplacian entries of an undirected edge. Self-loops are ignored.
    pub fn add_edge(&mut self, i: usize, j: usize, weight: f64) {
        if i == j {
            return;
        }
        self.entries.push((i, i, weight));
        self.entries.push((j, j, weight));
        self.entries.push((i, j, -weight));
        self.entries.push((j, i, -weight));
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn extend(&mut self, other: TripletList) {
        self.entries.extend(other.entries);
    }

    pub fn build(self) -> Result<SparseSymmetricMatrix> {
        SparseSymmetricMatrix::from_triplets(self.dim, self.entries)
    }
}

impl SparseSymmetricMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: vec![0; dim + 1],
            cols: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(dim: usize, scale: f64) -> Self {
        Self {
            dim,
            row_ptr: (0..=dim).collect(),
            cols: (0..dim).collect(),
            values: vec![scale; dim],
        }
    }

    /// Sums duplicate coordinates. Symmetry is the caller's responsibility;
    /// see [`is_symmetric`](Self::is_symmetric).
    pub fn from_triplets(dim: usize, triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, v) in &triplets {
            if r >= dim || c >= dim {
                return Err(Error::IndexOutOfRange {
                    index: r.max(c),
                    dimension: dim,
                });
            }
            if !v.is_finite() {
                return Err(Error::NumericalBreakdown(format!(
                    "non-finite matrix entry at ({r}, {c})"
                )));
            }
        }
        // Stable counting sort by row, then a stable sort by column within rows.
        let mut counts = vec![0usize; dim + 1];
        for &(r, _, _) in &triplets {
            counts[r + 1] += 1;
        }
        for i in 0..dim {
            counts[i + 1] += counts[i];
        }
        let starts = counts.clone();
        let mut next = counts;
        let mut by_row = vec![(0usize, 0.0f64); triplets.len()];
        for (r, c, v) in triplets {
            by_row[next[r]] = (c, v);
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::with_capacity(by_row.len());
        let mut values = Vec::with_capacity(by_row.len());
        row_ptr.push(0);
        for r in 0..dim {
            let row = &mut by_row[starts[r]..starts[r + 1]];
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.iter().peekable();
            while let Some(&(c, v)) = iter.next() {
                let mut sum = v;
                while let Some(&&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    sum += v2;
                    iter.next();
                }
                cols.push(c);
                values.push(sum);
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            dim,
            row_ptr,
            cols,
            values,
        })
    }

    pub fn from_dense(dense: &DMatrix<f64>) -> Result<Self> {
        if dense.nrows() != dense.ncols() {
            return Err(Error::DimensionMismatch {
                expected: dense.nrows(),
                actual: dense.ncols(),
            });
        }
        let mut triplets = Vec::new();
        for r in 0..dense.nrows() {
            for c in 0..dense.ncols() {
                if dense[(r, c)] != 0.0 {
                    triplets.push((r, c, dense[(r, c)]));
                }
            }
        }
        Self::from_triplets(dense.nrows(), triplets)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Stored entries (both triangles).
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// All stored `(row, col, value)` entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[range.clone()].binary_search(&c) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    /// `y = A x`.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: if x.len() != self.dim { x.len() } else { y.len() },
            });
        }
        let row_dot = |r: usize| -> f64 {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.cols[k]];
            }
            acc
        };
        if self.dim >= PARALLEL_ROWS {
            y.par_iter_mut().enumerate().for_each(|(r, out)| *out = row_dot(r));
        } else {
            for (r, out) in y.iter_mut().enumerate() {
                *out = row_dot(r);
            }
        }
        Ok(())
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.dim];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }

    /// `fᵀ A f`.
    pub fn quadratic_form(&self, f: &[f64]) -> Result<f64> {
        let af = self.matvec(f)?;
        Ok(f.iter().zip(&af).map(|(a, b)| a * b).sum())
    }

    /// `A + shift·I`.
    pub fn add_identity(&self, shift: f64) -> Self {
        let mut triplets: Vec<_> = self.entries().collect();
        triplets.extend((0..self.dim).map(|i| (i, i, shift)));
        Self::from_triplets(self.dim, triplets).expect("indices already validated")
    }

    /// `diag(s) A diag(s)`.
    pub fn scale_symmetric(&self, s: &[f64]) -> Result<Self> {
        if s.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: s.len(),
            });
        }
        let mut out = self.clone();
        for r in 0..self.dim {
            for k in out.row_ptr[r]..out.row_ptr[r + 1] {
                out.values[k] *= s[r] * s[out.cols[k]];
            }
        }
        Ok(out)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.entries()
            .all(|(r, c, v)| (v - self.get(c, r)).abs() <= tol * v.abs().max(1.0))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.entries() {
            m[(r, c)] += v;
        }
        m
    }
}
