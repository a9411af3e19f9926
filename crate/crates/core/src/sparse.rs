//! Minimal compressed-sparse-row matrix for the assembled FEM operators.

use std::ops::{AddAssign, Mul};

use nalgebra::DMatrix;
use num_traits::Zero;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut m = Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
            symmetric: false,
        };
        m.symmetric = m.nrows == m.ncols && m.is_symmetric(0.0);
        m
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entrywise symmetry recorded at construction.
    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.nrows == self.ncols
            && self
                .triplets()
                .all(|(i, j, v)| (v - self.get(j, i)).abs() <= tol * v.abs().max(1.0))
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(
            self.ncols,
            self.nrows,
            self.triplets().map(|(i, j, v)| (j, i, v)).collect(),
        )
    }

    /// `alpha * self + beta * other`.
    pub fn linear_combination(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.nrows * self.ncols,
                found: other.nrows * other.ncols,
            });
        }
        let triplets = self
            .triplets()
            .map(|(i, j, v)| (i, j, alpha * v))
            .chain(other.triplets().map(|(i, j, v)| (i, j, beta * v)))
            .collect();
        Ok(Self::from_triplets(self.nrows, self.ncols, triplets))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.ncols != other.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                found: other.nrows,
            });
        }
        let mut triplets = Vec::new();
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                triplets.extend(other.row(k).map(|(j, b)| (i, j, a * b)));
            }
        }
        Ok(Self::from_triplets(self.nrows, other.ncols, triplets))
    }

    /// Galerkin triple product `Pᵀ · self · P`.
    pub fn galerkin(&self, prolongation: &Self) -> Result<Self> {
        prolongation.transpose().matmul(&self.matmul(prolongation)?)
    }

    pub fn apply<T>(&self, x: &[T]) -> Vec<T>
    where
        T: Copy + Zero + AddAssign + Mul<f64, Output = T>,
    {
        assert_eq!(x.len(), self.ncols, "vector length does not match matrix");
        (0..self.nrows)
            .map(|i| {
                let mut acc = T::zero();
                for (j, v) in self.row(i) {
                    acc += x[j] * v;
                }
                acc
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] += v;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0)]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), 4.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert!(!m.symmetric());
    }

    #[test]
    fn product_and_transpose_agree_with_dense() {
        let a = CsrMatrix::from_triplets(3, 2, vec![(0, 0, 1.0), (1, 1, 2.0), (2, 0, -1.0)]);
        let b = CsrMatrix::from_triplets(2, 3, vec![(0, 2, 3.0), (1, 0, 0.5)]);
        let ab = a.matmul(&b).unwrap().to_dense();
        assert_eq!(ab, a.to_dense() * b.to_dense());
        assert_eq!(a.transpose().to_dense(), a.to_dense().transpose());
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn apply_complex() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 2.0), (0, 1, 1.0), (1, 1, 3.0)]);
        let y = a.apply(&[Complex64::new(1.0, 1.0), Complex64::new(0.0, 2.0)]);
        assert_eq!(y, vec![Complex64::new(2.0, 4.0), Complex64::new(0.0, 6.0)]);
    }
}
