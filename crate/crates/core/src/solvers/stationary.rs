//! Galerkin spaces, stationary solves and the elliptic projection.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::basis::{assemble_ms_operators, MultiscaleBasis};
use crate::error::{Error, Result};
use crate::fem::{prolongation, FineOperators, Space, WaveFunction};
use crate::sparse::CsrMatrix;

/// Mass and energy-form matrices of a Galerkin space.
#[derive(Debug, Clone)]
pub struct SpaceOperators {
    pub space: Space,
    pub mass: DMatrix<f64>,
    pub system: DMatrix<f64>,
}

#[derive(Debug, Clone)]
enum SpaceMap {
    P1(CsrMatrix),
    Multiscale(MultiscaleBasis),
}

/// A coarse subspace of the fine P1 space: coarse P1 or a multiscale basis.
#[derive(Debug, Clone)]
pub struct GalerkinSpace {
    map: SpaceMap,
    operators: SpaceOperators,
}

impl GalerkinSpace {
    pub fn coarse_p1(fine: &FineOperators) -> Result<Self> {
        let p = prolongation(fine.grid());
        let operators = SpaceOperators {
            space: Space::CoarseP1,
            mass: fine.mass.galerkin(&p)?.to_dense(),
            system: fine.system.galerkin(&p)?.to_dense(),
        };
        Ok(Self {
            map: SpaceMap::P1(p),
            operators,
        })
    }

    pub fn multiscale(basis: MultiscaleBasis, fine: &FineOperators) -> Result<Self> {
        let ms = assemble_ms_operators(&basis, fine)?;
        Ok(Self {
            map: SpaceMap::Multiscale(basis),
            operators: SpaceOperators {
                space: Space::Multiscale,
                mass: ms.mass,
                system: ms.system,
            },
        })
    }

    pub fn space(&self) -> Space {
        self.operators.space
    }

    pub fn dim(&self) -> usize {
        self.operators.mass.nrows()
    }

    pub fn operators(&self) -> &SpaceOperators {
        &self.operators
    }

    pub fn basis(&self) -> Option<&MultiscaleBasis> {
        match &self.map {
            SpaceMap::Multiscale(b) => Some(b),
            SpaceMap::P1(_) => None,
        }
    }

    fn n_fine(&self) -> usize {
        match &self.map {
            SpaceMap::P1(p) => p.nrows(),
            SpaceMap::Multiscale(b) => b.grid().n_fine(),
        }
    }

    /// Fine nodal values of a space element.
    pub fn prolong(&self, u: &WaveFunction) -> Result<WaveFunction> {
        self.check(u)?;
        let values = match &self.map {
            SpaceMap::P1(p) => p.apply(&u.coefficients),
            SpaceMap::Multiscale(b) => b.to_fine(&u.coefficients),
        };
        Ok(WaveFunction::new(Space::FineNodal, values))
    }

    /// Transposed prolongation of a fine vector (a functional on the fine space).
    pub fn restrict(&self, x: &[Complex64]) -> Vec<Complex64> {
        match &self.map {
            SpaceMap::P1(p) => p.transpose().apply(x),
            SpaceMap::Multiscale(b) => b.transpose_apply(x),
        }
    }

    fn check(&self, u: &WaveFunction) -> Result<()> {
        if u.space != self.space() {
            return Err(Error::SpaceMismatch {
                expected: self.space(),
                found: u.space,
            });
        }
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: u.len(),
            });
        }
        Ok(())
    }

    fn check_fine(&self, v: &WaveFunction) -> Result<()> {
        if v.space != Space::FineNodal {
            return Err(Error::SpaceMismatch {
                expected: Space::FineNodal,
                found: v.space,
            });
        }
        if v.len() != self.n_fine() {
            return Err(Error::DimensionMismatch {
                expected: self.n_fine(),
                found: v.len(),
            });
        }
        Ok(())
    }

    fn solve_system(&self, rhs: Vec<Complex64>) -> Result<WaveFunction> {
        let chol = real_cholesky(&self.operators.system, "space energy matrix")?;
        Ok(WaveFunction::new(self.space(), solve_complex(&chol, &rhs)))
    }
}

pub(crate) fn real_cholesky(a: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    a.clone()
        .cholesky()
        .ok_or_else(|| Error::SingularSystem(format!("{what} is not positive definite")))
}

fn solve_complex(chol: &Cholesky<f64, Dyn>, rhs: &[Complex64]) -> Vec<Complex64> {
    let re = chol.solve(&DVector::from_iterator(rhs.len(), rhs.iter().map(|z| z.re)));
    let im = chol.solve(&DVector::from_iterator(rhs.len(), rhs.iter().map(|z| z.im)));
    re.iter()
        .zip(im.iter())
        .map(|(&a, &b)| Complex64::new(a, b))
        .collect()
}

/// Space coefficients together with their fine nodal values.
#[derive(Debug, Clone)]
pub struct Projection {
    pub coefficients: WaveFunction,
    pub fine: WaveFunction,
}

/// Galerkin solution of `a(u, w) = (f, w)` for all `w` in the space.
pub fn stationary_solve(
    space: &GalerkinSpace,
    f: &WaveFunction,
    fine: &FineOperators,
) -> Result<Projection> {
    space.check_fine(f)?;
    let load = fine.mass.apply(&f.coefficients);
    let coefficients = space.solve_system(space.restrict(&load))?;
    let fine_values = space.prolong(&coefficients)?;
    Ok(Projection {
        coefficients,
        fine: fine_values,
    })
}

/// The `a`-orthogonal projection of a fine function onto the space.
pub fn elliptic_project(
    space: &GalerkinSpace,
    v: &WaveFunction,
    fine: &FineOperators,
) -> Result<Projection> {
    space.check_fine(v)?;
    let load = fine.system.apply(&v.coefficients);
    let coefficients = space.solve_system(space.restrict(&load))?;
    let fine_values = space.prolong(&coefficients)?;
    Ok(Projection {
        coefficients,
        fine: fine_values,
    })
}

/// Direct solve of `a(u, w) = (f, w)` on the whole fine space.
pub fn fine_stationary_solve(f: &WaveFunction, fine: &FineOperators) -> Result<WaveFunction> {
    use crate::band::{BandSolver, Ordering};
    if f.space != Space::FineNodal || f.len() != fine.n() {
        return Err(Error::DimensionMismatch {
            expected: fine.n(),
            found: f.len(),
        });
    }
    let load = fine.mass.apply(&f.coefficients);
    let solver = BandSolver::new(
        Ordering::interleaved(fine.n()),
        fine.system
            .triplets()
            .map(|(i, j, v)| (i, j, Complex64::new(v, 0.0))),
    )?;
    Ok(WaveFunction::new(Space::FineNodal, solver.solve(&load)))
}
