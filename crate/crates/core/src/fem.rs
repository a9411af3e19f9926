//! P1 finite elements on the periodic meshes.
//!
//! All matrices are assembled element by element. The potential term is
//! integrated with the two-point Gauss rule of every fine element; coarse
//! operators are obtained as Galerkin products `Pᵀ X P` with the prolongation,
//! so they integrate the potential with the same fine quadrature.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Level, PeriodicGridPair};
use crate::potentials::{GaussRule, PotentialField};
use crate::sparse::CsrMatrix;

/// The discrete space a coefficient vector lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Space {
    FineNodal,
    CoarseP1,
    Multiscale,
    Fourier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveFunction {
    pub space: Space,
    pub coefficients: Vec<Complex64>,
}

impl WaveFunction {
    pub fn new(space: Space, coefficients: Vec<Complex64>) -> Self {
        Self {
            space,
            coefficients,
        }
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

fn element_triplets(
    n: usize,
    local: impl Fn(usize) -> [[f64; 2]; 2],
) -> Vec<(usize, usize, f64)> {
    let mut t = Vec::with_capacity(4 * n);
    for e in 0..n {
        let nodes = [e, (e + 1) % n];
        let m = local(e);
        for a in 0..2 {
            for b in 0..2 {
                t.push((nodes[a], nodes[b], m[a][b]));
            }
        }
    }
    t
}

/// Consistent P1 mass matrix on one level.
pub fn assemble_mass(grid: &PeriodicGridPair, level: Level) -> CsrMatrix {
    let n = grid.n_nodes(level);
    let h = grid.mesh_size(level);
    let (d, o) = (h / 3.0, h / 6.0);
    CsrMatrix::from_triplets(n, n, element_triplets(n, |_| [[d, o], [o, d]]))
}

/// P1 stiffness matrix `(∇φ_i, ∇φ_j)` on one level.
pub fn assemble_stiffness(grid: &PeriodicGridPair, level: Level) -> CsrMatrix {
    let n = grid.n_nodes(level);
    let k = 1.0 / grid.mesh_size(level);
    CsrMatrix::from_triplets(n, n, element_triplets(n, |_| [[k, -k], [-k, k]]))
}

/// Local weighted mass `∫_e V φ_a φ_b` of one fine element.
pub fn local_weighted_mass(h: f64, v: [f64; 2]) -> [[f64; 2]; 2] {
    let mut m = [[0.0; 2]; 2];
    for q in 0..2 {
        let t = GaussRule::POINTS[q];
        let phi = [1.0 - t, t];
        let w = h * GaussRule::WEIGHTS[q] * v[q];
        for a in 0..2 {
            for b in 0..2 {
                m[a][b] += w * phi[a] * phi[b];
            }
        }
    }
    m
}

/// Fine-level `(V φ_i, φ_j)` with Gauss quadrature of the sampled potential.
pub fn assemble_weighted_mass(grid: &PeriodicGridPair, field: &PotentialField) -> Result<CsrMatrix> {
    if field.grid() != grid {
        return Err(Error::GridMismatch(format!(
            "potential sampled on {} fine elements, assembling on {}",
            field.grid().n_fine(),
            grid.n_fine()
        )));
    }
    let n = grid.n_fine();
    let h = grid.fine_size();
    Ok(CsrMatrix::from_triplets(
        n,
        n,
        element_triplets(n, |e| local_weighted_mass(h, field.element_samples(e))),
    ))
}

/// Prolongation of coarse P1 coefficients to fine nodal values (`n_fine × n_coarse`).
pub fn prolongation(grid: &PeriodicGridPair) -> CsrMatrix {
    let r = grid.refine_factor() as isize;
    let nf = grid.n_fine() as isize;
    let mut t = Vec::with_capacity(grid.n_coarse() * (2 * r as usize - 1));
    for j in 0..grid.n_coarse() {
        let center = grid.coarse_to_fine(j) as isize;
        for s in -(r - 1)..=(r - 1) {
            let i = (center + s).rem_euclid(nf) as usize;
            t.push((i, j, 1.0 - s.unsigned_abs() as f64 / r as f64));
        }
    }
    CsrMatrix::from_triplets(grid.n_fine(), grid.n_coarse(), t)
}

/// Constraint matrix `C = Pᵀ M_h` of the Clément-type interpolation.
pub fn constraint_matrix(prolongation: &CsrMatrix, fine_mass: &CsrMatrix) -> Result<CsrMatrix> {
    prolongation.transpose().matmul(fine_mass)
}

/// Clément quasi-interpolation `(v, φ_j) / (1, φ_j)` of a fine nodal function.
pub fn clement_interpolate<T>(grid: &PeriodicGridPair, constraint: &CsrMatrix, v: &[T]) -> Vec<T>
where
    T: Copy + num_traits::Zero + std::ops::AddAssign + std::ops::Mul<f64, Output = T>,
{
    let inv_h = 1.0 / grid.coarse_size();
    constraint.apply(v).into_iter().map(|c| c * inv_h).collect()
}

/// Linear interpolation of periodic nodal values onto a grid `factor` times finer.
pub fn refine_nodal(u: &[Complex64], factor: usize) -> Vec<Complex64> {
    let n = u.len();
    let mut out = Vec::with_capacity(n * factor);
    for i in 0..n {
        let (a, b) = (u[i], u[(i + 1) % n]);
        for s in 0..factor {
            let t = s as f64 / factor as f64;
            out.push(a * (1.0 - t) + b * t);
        }
    }
    out
}

/// `conj(w)ᵀ A v`.
pub fn hermitian_form(a: &CsrMatrix, v: &[Complex64], w: &[Complex64]) -> Complex64 {
    let av = a.apply(v);
    w.iter().zip(&av).map(|(wi, ai)| wi.conj() * ai).sum()
}

/// The fine-level operators of one experiment.
#[derive(Debug, Clone)]
pub struct FineOperators {
    grid: PeriodicGridPair,
    pub epsilon: f64,
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    pub weighted_mass: CsrMatrix,
    /// `ε²/2 K + M_V`, the matrix of the energy form `a(·,·)`.
    pub system: CsrMatrix,
}

impl FineOperators {
    pub fn new(field: &PotentialField, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        let grid = *field.grid();
        let mass = assemble_mass(&grid, Level::Fine);
        let stiffness = assemble_stiffness(&grid, Level::Fine);
        let weighted_mass = assemble_weighted_mass(&grid, field)?;
        let system = stiffness.linear_combination(0.5 * epsilon * epsilon, &weighted_mass, 1.0)?;
        Ok(Self {
            grid,
            epsilon,
            mass,
            stiffness,
            weighted_mass,
            system,
        })
    }

    pub fn grid(&self) -> &PeriodicGridPair {
        &self.grid
    }

    /// The same fine operators paired with another coarse mesh.
    pub fn with_coarse(&self, n_coarse: usize) -> Result<Self> {
        let grid = PeriodicGridPair::with_fine_elements(n_coarse, self.n())?;
        Ok(Self {
            grid,
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.grid.n_fine()
    }

    fn check(&self, v: &WaveFunction) -> Result<()> {
        if v.space != Space::FineNodal {
            return Err(Error::SpaceMismatch {
                expected: Space::FineNodal,
                found: v.space,
            });
        }
        if v.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: v.len(),
            });
        }
        Ok(())
    }

    /// `a(v, w)` for fine nodal functions.
    pub fn bilinear_form(&self, v: &WaveFunction, w: &WaveFunction) -> Result<Complex64> {
        self.check(v)?;
        self.check(w)?;
        Ok(hermitian_form(&self.system, &v.coefficients, &w.coefficients))
    }

    pub fn l2_norm(&self, v: &[Complex64]) -> f64 {
        hermitian_form(&self.mass, v, v).re.max(0.0).sqrt()
    }

    /// `|v|_{H¹}`.
    pub fn h1_seminorm(&self, v: &[Complex64]) -> f64 {
        hermitian_form(&self.stiffness, v, v).re.max(0.0).sqrt()
    }

    /// `(‖v‖² + |v|²_{H¹})^{1/2}`.
    pub fn h1_norm(&self, v: &[Complex64]) -> f64 {
        self.l2_norm(v).hypot(self.h1_seminorm(v))
    }

    /// `a(v, v)^{1/2}`.
    pub fn energy_norm(&self, v: &[Complex64]) -> f64 {
        hermitian_form(&self.system, v, v).re.max(0.0).sqrt()
    }
}

/// Coarse P1 operators, obtained by Galerkin projection of the fine ones.
#[derive(Debug, Clone)]
pub struct CoarseOperators {
    pub prolongation: CsrMatrix,
    pub mass: CsrMatrix,
    pub system: CsrMatrix,
}

impl CoarseOperators {
    pub fn new(fine: &FineOperators) -> Result<Self> {
        let prolongation = prolongation(fine.grid());
        let mass = fine.mass.galerkin(&prolongation)?;
        let system = fine.system.galerkin(&prolongation)?;
        Ok(Self {
            prolongation,
            mass,
            system,
        })
    }

    pub fn to_fine(&self, coarse: &[Complex64]) -> Vec<Complex64> {
        self.prolongation.apply(coarse)
    }
}
