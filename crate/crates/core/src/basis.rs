//! Multiscale basis functions by constrained energy minimization.
//!
//! Column `j` minimizes `a(ψ, ψ)` over fine P1 functions subject to
//! `(ψ, φ_k) = δ_jk` for every coarse hat `φ_k`. The saddle-point system is
//! eliminated blockwise: with `G = A⁻¹Cᵀ` and `S = C G`, the basis is
//! `Ψ = G S⁻¹`. Localized columns solve the same problem on an oversampling
//! patch with homogeneous Dirichlet values at the patch ends, keeping only the
//! constraints of coarse nodes whose hats meet the patch.

use std::io::Write;
use std::path::Path;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::band::{BandSolver, Ordering};
use crate::error::{Error, Result};
use crate::fem::{constraint_matrix, prolongation, FineOperators};
use crate::mesh::PeriodicGridPair;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BasisKind {
    Global,
    Localized { layers: usize },
}

/// A fine nodal function supported on the ring interval `start .. start + values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFunction {
    pub start: usize,
    pub values: Vec<f64>,
}

impl LocalFunction {
    fn offset(&self, idx: usize, n: usize) -> Option<usize> {
        let k = (idx + n - self.start) % n;
        (k < self.values.len()).then_some(k)
    }

    fn overlaps(&self, other: &Self, n: usize) -> bool {
        (other.start + n - self.start) % n < self.values.len()
            || (self.start + n - other.start) % n < other.values.len()
    }

    fn dot(&self, other: &Self, n: usize) -> f64 {
        if !self.overlaps(other, n) {
            return 0.0;
        }
        self.values
            .iter()
            .enumerate()
            .filter_map(|(k, &a)| {
                other
                    .offset((self.start + k) % n, n)
                    .map(|l| a * other.values[l])
            })
            .sum()
    }

    /// `X f` for a sparse fine matrix whose rows couple neighbouring nodes only.
    fn apply_neighbour(&self, x: &CsrMatrix, n: usize) -> Self {
        let len = (self.values.len() + 2).min(n);
        let start = (self.start + n - 1) % n;
        let values = (0..len)
            .map(|k| {
                let i = (start + k) % n;
                x.row(i)
                    .filter_map(|(c, v)| self.offset(c, n).map(|l| v * self.values[l]))
                    .sum()
            })
            .collect();
        Self { start, values }
    }
}

#[derive(Debug, Clone)]
enum Storage {
    Dense(DMatrix<f64>),
    Patches(Vec<LocalFunction>),
}

#[derive(Debug, Clone)]
pub struct MultiscaleBasis {
    grid: PeriodicGridPair,
    epsilon: f64,
    kind: BasisKind,
    storage: Storage,
}

impl MultiscaleBasis {
    pub fn grid(&self) -> &PeriodicGridPair {
        &self.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.grid.n_coarse()
    }

    /// The basis is stored as a dense `n_fine × N` matrix.
    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    /// Column `j` as a full fine nodal vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        match &self.storage {
            Storage::Dense(psi) => psi.column(j).iter().copied().collect(),
            Storage::Patches(cols) => {
                let n = self.grid.n_fine();
                let mut v = vec![0.0; n];
                for (k, &x) in cols[j].values.iter().enumerate() {
                    v[(cols[j].start + k) % n] = x;
                }
                v
            }
        }
    }

    fn local(&self, j: usize) -> LocalFunction {
        match &self.storage {
            Storage::Dense(psi) => LocalFunction {
                start: 0,
                values: psi.column(j).iter().copied().collect(),
            },
            Storage::Patches(cols) => cols[j].clone(),
        }
    }

    /// `n_fine × N` coefficient matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.storage {
            Storage::Dense(psi) => psi.clone(),
            Storage::Patches(_) => {
                let n = self.grid.n_fine();
                let mut d = DMatrix::zeros(n, self.dim());
                for j in 0..self.dim() {
                    d.set_column(j, &DVector::from_vec(self.column(j)));
                }
                d
            }
        }
    }

    /// Fine nodal values of `Σ_j c_j ψ_j`.
    pub fn to_fine(&self, coefficients: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.n_fine();
        match &self.storage {
            Storage::Dense(psi) => (0..n)
                .map(|i| {
                    psi.row(i)
                        .iter()
                        .zip(coefficients)
                        .map(|(p, c)| c * p)
                        .sum()
                })
                .collect(),
            Storage::Patches(cols) => {
                let mut u = vec![Complex64::new(0.0, 0.0); n];
                for (col, c) in cols.iter().zip(coefficients) {
                    for (k, &p) in col.values.iter().enumerate() {
                        u[(col.start + k) % n] += c * p;
                    }
                }
                u
            }
        }
    }

    /// `Ψᵀ x` for a fine vector `x`.
    pub fn transpose_apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.n_fine();
        (0..self.dim())
            .map(|j| match &self.storage {
                Storage::Dense(psi) => psi.column(j).iter().zip(x).map(|(p, v)| v * *p).sum(),
                Storage::Patches(cols) => cols[j]
                    .values
                    .iter()
                    .enumerate()
                    .map(|(k, &p)| x[(cols[j].start + k) % n] * p)
                    .sum(),
            })
            .collect()
    }

    /// Fine nodes carrying column `j` (all nodes for dense storage).
    pub fn support(&self, j: usize) -> (usize, usize) {
        match &self.storage {
            Storage::Dense(_) => (0, self.grid.n_fine()),
            Storage::Patches(cols) => (cols[j].start, cols[j].values.len()),
        }
    }

    /// Writes the dense basis as CSV: `x, psi_0, ..., psi_{N-1}`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let dense = self.to_dense();
        let mut out = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
        );
        let mut text = String::from("x");
        for j in 0..self.dim() {
            text.push_str(&format!(",psi_{j}"));
        }
        writeln!(out, "{text}").map_err(|e| Error::io(path, e))?;
        for i in 0..self.grid.n_fine() {
            let mut line = format!("{}", self.grid.fine_x(i));
            for j in 0..self.dim() {
                line.push_str(&format!(",{}", dense[(i, j)]));
            }
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Writes nonzero coefficients as `fine_node coarse_node value` lines.
    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        let n = self.grid.n_fine();
        let mut out = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
        );
        writeln!(out, "# {} {} fine_node coarse_node value", n, self.dim())
            .map_err(|e| Error::io(path, e))?;
        for j in 0..self.dim() {
            let col = self.local(j);
            for (k, &v) in col.values.iter().enumerate() {
                if v != 0.0 {
                    writeln!(out, "{} {} {:e}", (col.start + k) % n, j, v)
                        .map_err(|e| Error::io(path, e))?;
                }
            }
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

fn check_assumption(fine: &FineOperators) {
    let h = fine.grid().coarse_size();
    if h > fine.epsilon {
        warn!(
            "coarse mesh size H = {h:.4e} exceeds epsilon = {:.4e}; the multiscale error bounds need H = O(epsilon)",
            fine.epsilon
        );
    }
}

/// Global basis functions.
pub fn build_global_basis(fine: &FineOperators) -> Result<MultiscaleBasis> {
    check_assumption(fine);
    let grid = *fine.grid();
    let (nf, nc) = (grid.n_fine(), grid.n_coarse());
    let c = constraint_matrix(&prolongation(&grid), &fine.mass)?;
    let a = BandSolver::new(Ordering::interleaved(nf), fine.system.triplets())?;

    let columns: Vec<Vec<f64>> = (0..nc)
        .into_par_iter()
        .map(|j| {
            let mut rhs = vec![0.0; nf];
            for (i, v) in c.row(j) {
                rhs[i] = v;
            }
            a.solve(&rhs)
        })
        .collect();
    let g = DMatrix::from_fn(nf, nc, |i, j| columns[j][i]);
    drop(columns);

    let mut s = DMatrix::zeros(nc, nc);
    for k in 0..nc {
        let col: Vec<f64> = g.column(k).iter().copied().collect();
        s.set_column(k, &DVector::from_vec(c.apply(&col)));
    }
    let s = s.symmetric_part();
    let chol = s.cholesky().ok_or_else(|| {
        Error::SingularSystem("Schur complement of the global basis problem is not definite".into())
    })?;
    let psi = g * chol.inverse();
    debug!("global basis: {nc} functions on {nf} fine nodes");
    Ok(MultiscaleBasis {
        grid,
        epsilon: fine.epsilon,
        kind: BasisKind::Global,
        storage: Storage::Dense(psi),
    })
}

/// Localized basis functions on `m`-layer oversampling patches.
pub fn build_localized_basis(fine: &FineOperators, layers: usize) -> Result<MultiscaleBasis> {
    if layers < 1 {
        return Err(Error::InvalidParameter(
            "localized basis needs at least one oversampling layer".into(),
        ));
    }
    let grid = *fine.grid();
    if grid.patch(0, layers)?.is_saturated() {
        debug!("{layers} layers cover the whole domain; using the global basis");
        let mut basis = build_global_basis(fine)?;
        basis.kind = BasisKind::Localized { layers };
        return Ok(basis);
    }
    check_assumption(fine);
    let c = constraint_matrix(&prolongation(&grid), &fine.mass)?;
    let columns = (0..grid.n_coarse())
        .into_par_iter()
        .map(|j| patch_function(fine, &c, j, layers))
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiscaleBasis {
        grid,
        epsilon: fine.epsilon,
        kind: BasisKind::Localized { layers },
        storage: Storage::Patches(columns),
    })
}

fn patch_function(
    fine: &FineOperators,
    c: &CsrMatrix,
    j: usize,
    layers: usize,
) -> Result<LocalFunction> {
    let grid = fine.grid();
    let nf = grid.n_fine();
    let patch = grid.patch(j, layers)?;
    let singular = |reason: String| Error::PatchSingular {
        node: j,
        layers,
        reason,
    };
    let start = (patch.first_fine_node() + 1) % nf;
    let nl = patch.n_elements() * grid.refine_factor() - 1;
    let coarse = patch.coarse_nodes();
    let nc = coarse.len();
    if nc > nl {
        return Err(singular(format!(
            "{nc} constraints but only {nl} interior fine unknowns"
        )));
    }
    let local = |i: usize| {
        let k = (i + nf - start) % nf;
        (k < nl).then_some(k)
    };

    let entries = (0..nl).flat_map(|k| {
        let i = (start + k) % nf;
        fine.system
            .row(i)
            .filter_map(move |(col, v)| local(col).map(|l| (k, l, v)))
            .collect::<Vec<_>>()
    });
    let a = BandSolver::new(Ordering::natural(nl), entries)
        .map_err(|e| singular(e.to_string()))?;

    let mut c_loc = DMatrix::zeros(nc, nl);
    for (r, &z) in coarse.iter().enumerate() {
        for (col, v) in c.row(z) {
            if let Some(l) = local(col) {
                c_loc[(r, l)] = v;
            }
        }
    }
    let mut g = DMatrix::zeros(nl, nc);
    for r in 0..nc {
        let rhs: Vec<f64> = c_loc.row(r).iter().copied().collect();
        g.set_column(r, &DVector::from_vec(a.solve(&rhs)));
    }
    let s = (&c_loc * &g).symmetric_part();
    let chol = s
        .cholesky()
        .ok_or_else(|| singular("local Schur complement is not definite".into()))?;
    let center = coarse
        .iter()
        .position(|&z| z == j)
        .expect("patch contains its centre node");
    let mut e = DVector::zeros(nc);
    e[center] = 1.0;
    let y = chol.solve(&e);
    let values = (g * y).iter().copied().collect();
    Ok(LocalFunction { start, values })
}

/// Galerkin operators of the multiscale space.
#[derive(Debug, Clone)]
pub struct MsOperators {
    /// `Ψᵀ M Ψ`.
    pub mass: DMatrix<f64>,
    /// `Ψᵀ A Ψ`.
    pub system: DMatrix<f64>,
}

pub fn assemble_ms_operators(basis: &MultiscaleBasis, fine: &FineOperators) -> Result<MsOperators> {
    if basis.grid() != fine.grid() {
        return Err(Error::DimensionMismatch {
            expected: fine.n(),
            found: basis.grid().n_fine(),
        });
    }
    let (mass, system) = match &basis.storage {
        Storage::Dense(psi) => (
            dense_galerkin(psi, &fine.mass),
            dense_galerkin(psi, &fine.system),
        ),
        Storage::Patches(cols) => (
            patch_galerkin(cols, &fine.mass, fine.n()),
            patch_galerkin(cols, &fine.system, fine.n()),
        ),
    };
    Ok(MsOperators { mass, system })
}

fn dense_galerkin(psi: &DMatrix<f64>, x: &CsrMatrix) -> DMatrix<f64> {
    let (nf, nc) = psi.shape();
    let cols: Vec<Vec<f64>> = (0..nc)
        .into_par_iter()
        .map(|j| x.apply(psi.column(j).as_slice()))
        .collect();
    let xpsi = DMatrix::from_fn(nf, nc, |i, j| cols[j][i]);
    (psi.transpose() * xpsi).symmetric_part()
}

fn patch_galerkin(cols: &[LocalFunction], x: &CsrMatrix, n: usize) -> DMatrix<f64> {
    let nc = cols.len();
    let applied: Vec<LocalFunction> = cols.par_iter().map(|c| c.apply_neighbour(x, n)).collect();
    let rows: Vec<Vec<f64>> = (0..nc)
        .into_par_iter()
        .map(|i| (0..nc).map(|j| cols[i].dot(&applied[j], n)).collect())
        .collect();
    DMatrix::from_fn(nc, nc, |i, j| rows[i][j]).symmetric_part()
}

trait SymmetricPart {
    fn symmetric_part(self) -> Self;
}

impl SymmetricPart for DMatrix<f64> {
    fn symmetric_part(self) -> Self {
        let t = self.transpose();
        (self + t) * 0.5
    }
}

/// `max_j |ψ_j − ψ_j^loc|_{H¹}` between two bases on the same grid.
pub fn gradient_gap(a: &MultiscaleBasis, b: &MultiscaleBasis, stiffness: &CsrMatrix) -> f64 {
    (0..a.dim())
        .into_par_iter()
        .map(|j| {
            let d: Vec<f64> = a
                .column(j)
                .iter()
                .zip(b.column(j))
                .map(|(x, y)| x - y)
                .collect();
            let kd = stiffness.apply(&d);
            d.iter().zip(&kd).map(|(x, y)| x * y).sum::<f64>().max(0.0).sqrt()
        })
        .reduce(|| 0.0, f64::max)
}

/// Gradient mass of `ψ_j` outside growing patches around `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    pub node: usize,
    /// `‖∇ψ_j‖_{Ω∖N^m(S_j)} / ‖∇ψ_j‖` for `m = 0, 1, ...`.
    pub ratios: Vec<f64>,
    /// First `m` whose patch covers the domain.
    pub saturation: usize,
    /// Geometric rate fitted to the pre-saturation entries above roundoff.
    pub beta: Option<f64>,
}

/// Entries below this are treated as roundoff when fitting the decay rate.
pub const DECAY_FIT_FLOOR: f64 = 1e-13;

pub fn measure_decay(basis: &MultiscaleBasis, j: usize, m_max: usize) -> Result<DecayProfile> {
    if basis.kind() != BasisKind::Global {
        return Err(Error::InvalidParameter(
            "decay is measured on the global basis".into(),
        ));
    }
    let grid = basis.grid();
    if j >= grid.n_coarse() {
        return Err(Error::InvalidParameter(format!("node {j} out of range")));
    }
    let nf = grid.n_fine();
    let h = grid.fine_size();
    let psi = basis.column(j);
    let energy: Vec<f64> = (0..nf)
        .map(|e| {
            let d = psi[(e + 1) % nf] - psi[e];
            d * d / h
        })
        .collect();
    let total: f64 = energy.iter().sum();
    if !(total > 0.0) {
        return Err(Error::SingularSystem(format!("basis function {j} is constant")));
    }
    let mut ratios = Vec::with_capacity(m_max + 1);
    let mut saturation = m_max + 1;
    for m in 0..=m_max {
        let patch = grid.patch(j, m)?;
        if patch.is_saturated() {
            saturation = saturation.min(m);
            ratios.push(0.0);
            continue;
        }
        let outside: f64 = (0..nf)
            .filter(|&e| !patch.contains_fine_element(e))
            .map(|e| energy[e])
            .sum();
        ratios.push((outside / total).sqrt());
    }
    let points: Vec<(f64, f64)> = ratios
        .iter()
        .enumerate()
        .skip(1)
        .take_while(|&(m, _)| m < saturation)
        .filter(|&(_, &r)| r > DECAY_FIT_FLOOR)
        .map(|(m, &r)| (m as f64, r.ln()))
        .collect();
    let beta = (points.len() >= 3).then(|| least_squares_slope(&points).exp());
    Ok(DecayProfile {
        node: j,
        ratios,
        saturation,
        beta,
    })
}

/// Slope of the least-squares line through `points`.
pub fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_mass, assemble_stiffness};
    use crate::mesh::Level;
    use crate::potentials::{smooth_potential, PotentialField};

    fn ops(nc: usize, r: usize, eps: f64) -> FineOperators {
        let g = PeriodicGridPair::new(nc, r).unwrap();
        FineOperators::new(&smooth_potential(0.1, &g).unwrap(), eps).unwrap()
    }

    fn constraint_residual(basis: &MultiscaleBasis, fine: &FineOperators) -> f64 {
        let c = constraint_matrix(&prolongation(fine.grid()), &fine.mass).unwrap();
        let mut worst: f64 = 0.0;
        for j in 0..basis.dim() {
            let cpsi = c.apply(&basis.column(j));
            for (k, v) in cpsi.iter().enumerate() {
                let target = if k == j { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }

    #[test]
    fn identity_refinement_gives_inverse_mass() {
        let g = PeriodicGridPair::new(8, 1).unwrap();
        let fine = FineOperators::new(&PotentialField::constant(&g, 1.5).unwrap(), 0.5).unwrap();
        let basis = build_global_basis(&fine).unwrap();
        let minv = assemble_mass(&g, Level::Coarse).to_dense().try_inverse().unwrap();
        assert!((basis.to_dense() - &minv).amax() < 1e-10);
        let ms = assemble_ms_operators(&basis, &fine).unwrap();
        assert!((&ms.mass - &minv).amax() < 1e-10);
        let a = fine.system.to_dense();
        assert!((&ms.system - &minv * a * &minv).amax() < 1e-9);
        // too few fine unknowns for the local problems
        assert!(matches!(
            build_localized_basis(&fine, 1),
            Err(Error::PatchSingular { .. })
        ));
    }

    #[test]
    fn constraints_and_realness() {
        let fine = ops(16, 8, 0.125);
        let global = build_global_basis(&fine).unwrap();
        assert!(constraint_residual(&global, &fine) < 1e-10);
        let local = build_localized_basis(&fine, 2).unwrap();
        assert!(constraint_residual(&local, &fine) < 1e-10);
        let ms = assemble_ms_operators(&local, &fine).unwrap();
        assert!((&ms.system - ms.system.transpose()).amax() < 1e-12 * ms.system.amax());
        assert!(ms.mass.clone().symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn saturated_patches_reproduce_global() {
        let fine = ops(8, 4, 0.25);
        let global = build_global_basis(&fine).unwrap();
        let local = build_localized_basis(&fine, 3).unwrap();
        assert!((global.to_dense() - local.to_dense()).amax() < 1e-12);
        assert_eq!(local.kind(), BasisKind::Localized { layers: 3 });
    }

    #[test]
    fn localized_support_and_operators() {
        let fine = ops(16, 4, 0.25);
        let local = build_localized_basis(&fine, 1).unwrap();
        for j in 0..16 {
            let patch = fine.grid().patch(j, 1).unwrap();
            let inside = patch.fine_nodes();
            let col = local.column(j);
            for (i, v) in col.iter().enumerate() {
                if !inside[1..inside.len() - 1].contains(&i) {
                    assert_eq!(*v, 0.0);
                }
            }
        }
        let ms = assemble_ms_operators(&local, &fine).unwrap();
        let psi = local.to_dense();
        let dense_a = psi.transpose() * fine.system.to_dense() * &psi;
        let dense_m = psi.transpose() * fine.mass.to_dense() * &psi;
        assert!((ms.system - dense_a).amax() < 1e-10);
        assert!((ms.mass - dense_m).amax() < 1e-12);
    }

    #[test]
    fn decay_profile_shape() {
        let fine = ops(16, 8, 0.125);
        let global = build_global_basis(&fine).unwrap();
        let p = measure_decay(&global, 5, 9).unwrap();
        assert_eq!(p.ratios.len(), 10);
        assert_eq!(p.saturation, 7);
        assert!(p.ratios.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert_eq!(p.ratios[9], 0.0);
        assert!(p.beta.unwrap() < 1.0);
        let stiff = assemble_stiffness(fine.grid(), Level::Fine);
        let local = build_localized_basis(&fine, 2).unwrap();
        assert!(gradient_gap(&global, &local, &stiff) > 0.0);
    }
}
