//! Banded LU factorization without pivoting.
//!
//! All systems solved here are either real symmetric positive definite or
//! complex with a definite Hermitian part (the Crank–Nicolson matrices), so
//! elimination in the natural order is stable. Periodic band matrices (with
//! corner entries coupling the first and last nodes) are reordered as
//! `0, n-1, 1, n-2, ...`, which turns a cyclic half-bandwidth `b` into an
//! ordinary band of half-width at most `2b + 1`.

use std::fmt::Debug;
use std::ops::{AddAssign, Div, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use num_traits::{One, Zero};

use crate::error::{Error, Result};

pub trait Scalar:
    Copy
    + Debug
    + Zero
    + One
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + Mul<f64, Output = Self>
    + Send
    + Sync
{
    fn modulus(self) -> f64;
}

impl Scalar for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// Node reordering used to band a matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering {
    to_node: Vec<usize>,
    to_pos: Vec<usize>,
}

impl Ordering {
    pub fn natural(n: usize) -> Self {
        Self {
            to_node: (0..n).collect(),
            to_pos: (0..n).collect(),
        }
    }

    /// `0, n-1, 1, n-2, ...`: bands a cyclic matrix.
    pub fn interleaved(n: usize) -> Self {
        let to_node: Vec<usize> = (0..n)
            .map(|p| if p % 2 == 0 { p / 2 } else { n - 1 - p / 2 })
            .collect();
        let mut to_pos = vec![0; n];
        for (p, &node) in to_node.iter().enumerate() {
            to_pos[node] = p;
        }
        Self { to_node, to_pos }
    }

    pub fn len(&self) -> usize {
        self.to_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_node.is_empty()
    }

    pub fn position(&self, node: usize) -> usize {
        self.to_pos[node]
    }

    pub fn permute<T: Copy>(&self, x: &[T]) -> Vec<T> {
        self.to_node.iter().map(|&node| x[node]).collect()
    }

    pub fn unpermute<T: Copy + Zero>(&self, y: &[T]) -> Vec<T> {
        let mut x = vec![T::zero(); y.len()];
        for (p, &node) in self.to_node.iter().enumerate() {
            x[node] = y[p];
        }
        x
    }
}

/// Row-major band storage: entry `(i, j)` lives at `i * width + (j + lower - i)`.
#[derive(Debug, Clone)]
pub struct BandMatrix<T> {
    n: usize,
    lower: usize,
    upper: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandMatrix<T> {
    /// Builds the band from entries given in (already permuted) positions.
    pub fn from_entries(n: usize, entries: &[(usize, usize, T)]) -> Self {
        let (mut lower, mut upper) = (0, 0);
        for &(i, j, _) in entries {
            if i > j {
                lower = lower.max(i - j);
            } else {
                upper = upper.max(j - i);
            }
        }
        let mut band = Self {
            n,
            lower,
            upper,
            data: vec![T::zero(); n * (lower + upper + 1)],
        };
        for &(i, j, v) in entries {
            let k = band.index(i, j);
            band.data[k] += v;
        }
        band
    }

    /// Builds the band after mapping node indices through `ordering`.
    pub fn from_node_entries(
        ordering: &Ordering,
        entries: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Self {
        let permuted: Vec<_> = entries
            .into_iter()
            .map(|(i, j, v)| (ordering.position(i), ordering.position(j), v))
            .collect();
        Self::from_entries(ordering.len(), &permuted)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.lower, self.upper)
    }

    fn width(&self) -> usize {
        self.lower + self.upper + 1
    }

    fn index(&self, i: usize, j: usize) -> usize {
        i * self.width() + (j + self.lower - i)
    }

    fn columns(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.lower)..(i + self.upper + 1).min(self.n)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if j + self.lower < i || j > i + self.upper {
            T::zero()
        } else {
            self.data[self.index(i, j)]
        }
    }

    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut acc = T::zero();
            let row = &self.data[i * self.width()..(i + 1) * self.width()];
            for j in self.columns(i) {
                acc += row[j + self.lower - i] * x[j];
            }
            *yi = acc;
        }
    }

    /// `conj(x)ᵀ · self · x` for Hermitian-type evaluations; `conj` is the caller's.
    pub fn quadratic_form(&self, x: &[T], conj: impl Fn(T) -> T) -> T {
        let mut y = vec![T::zero(); self.n];
        self.matvec(x, &mut y);
        let mut acc = T::zero();
        for (xi, yi) in x.iter().zip(&y) {
            acc += conj(*xi) * *yi;
        }
        acc
    }

    pub fn factor(mut self) -> Result<BandLu<T>> {
        let scale = self
            .data
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.modulus()));
        let tiny = scale * 1e-14;
        let w = self.width();
        for k in 0..self.n {
            let pivot = self.data[k * w + self.lower];
            let pm = pivot.modulus();
            if !(pm > tiny) || !pm.is_finite() {
                return Err(Error::SingularSystem(format!(
                    "zero pivot at row {k} of a band matrix of size {}",
                    self.n
                )));
            }
            let last_row = (k + self.lower).min(self.n - 1);
            let last_col = (k + self.upper).min(self.n - 1);
            for i in k + 1..=last_row {
                let ik = self.index(i, k);
                let factor = self.data[ik] / pivot;
                self.data[ik] = factor;
                for j in k + 1..=last_col {
                    let kj = self.data[k * w + (j + self.lower - k)];
                    let ij = self.index(i, j);
                    self.data[ij] -= factor * kj;
                }
            }
        }
        Ok(BandLu { band: self })
    }
}

/// In-place LU factors of a [`BandMatrix`] (unit lower triangle implicit).
#[derive(Debug, Clone)]
pub struct BandLu<T> {
    band: BandMatrix<T>,
}

impl<T: Scalar> BandLu<T> {
    pub fn dim(&self) -> usize {
        self.band.n
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let a = &self.band;
        let w = a.width();
        for i in 0..a.n {
            let mut acc = b[i];
            for j in i.saturating_sub(a.lower)..i {
                acc -= a.data[i * w + (j + a.lower - i)] * b[j];
            }
            b[i] = acc;
        }
        for i in (0..a.n).rev() {
            let mut acc = b[i];
            for j in i + 1..(i + a.upper + 1).min(a.n) {
                acc -= a.data[i * w + (j + a.lower - i)] * b[j];
            }
            b[i] = acc / a.data[i * w + a.lower];
        }
    }
}

/// Band LU of a matrix given in node indexing, with the reordering folded in.
#[derive(Debug, Clone)]
pub struct BandSolver<T> {
    ordering: Ordering,
    lu: BandLu<T>,
}

impl<T: Scalar> BandSolver<T> {
    pub fn new(
        ordering: Ordering,
        entries: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Result<Self> {
        let lu = BandMatrix::from_node_entries(&ordering, entries).factor()?;
        Ok(Self { ordering, lu })
    }

    pub fn dim(&self) -> usize {
        self.ordering.len()
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let mut y = self.ordering.permute(rhs);
        self.lu.solve_in_place(&mut y);
        self.ordering.unpermute(&y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn cyclic(n: usize, half: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| {
            let d = (i as isize - j as isize).unsigned_abs();
            let d = d.min(n - d);
            if i == j {
                4.0 + half as f64
            } else if d <= half {
                -1.0 / d as f64
            } else {
                0.0
            }
        })
    }

    #[test]
    fn interleaving_bands_cyclic_matrices() {
        for (n, half) in [(9, 1), (10, 1), (17, 3), (40, 5)] {
            let a = cyclic(n, half);
            let ord = Ordering::interleaved(n);
            let entries = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|&(i, j)| a[(i, j)] != 0.0)
                .map(|(i, j)| (i, j, a[(i, j)]));
            let band = BandMatrix::from_node_entries(&ord, entries);
            let (l, u) = band.bandwidths();
            assert!(l <= 2 * half + 1 && u <= 2 * half + 1, "n={n} half={half}: {l},{u}");
        }
    }

    #[test]
    fn solves_match_dense() {
        let n = 23;
        let a = cyclic(n, 2);
        let solver = BandSolver::new(
            Ordering::interleaved(n),
            (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|&(i, j)| a[(i, j)] != 0.0)
                .map(|(i, j)| (i, j, a[(i, j)])),
        )
        .unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = solver.solve(&b);
        let r = &a * DVector::from_vec(x) - DVector::from_vec(b);
        assert!(r.amax() < 1e-13);
    }

    #[test]
    fn complex_crank_nicolson_type_system() {
        let n = 16;
        let a = cyclic(n, 1);
        let shift = Complex64::new(0.0, 0.3);
        let entries: Vec<_> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| a[(i, j)] != 0.0)
            .map(|(i, j)| {
                let v = Complex64::new(-0.5 * a[(i, j)], 0.0);
                (i, j, if i == j { v + shift } else { v })
            })
            .collect();
        let solver = BandSolver::new(Ordering::interleaved(n), entries.clone()).unwrap();
        let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(1.0, i as f64)).collect();
        let x = solver.solve(&b);
        let mut ax = vec![Complex64::zero(); n];
        for (i, j, v) in entries {
            ax[i] += v * x[j];
        }
        for (l, r) in ax.iter().zip(&b) {
            assert!((l - r).norm() < 1e-12);
        }
    }

    #[test]
    fn singular_is_reported() {
        let entries = vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)];
        let r = BandSolver::new(Ordering::natural(2), entries);
        assert!(matches!(r, Err(Error::SingularSystem(_))));
    }
}
