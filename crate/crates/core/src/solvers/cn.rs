//! Crank–Nicolson time stepping in a Galerkin space.
//!
//! The scheme is `(iεM − Δt/2 A) Uⁿ = (iεM + Δt/2 A) Uⁿ⁻¹`. Spaces with banded
//! operators (coarse P1, localized multiscale) factor the left-hand side once
//! and step. Dense operators (global multiscale bases) are propagated in the
//! generalized eigenbasis of `(A, M)`, where one step multiplies mode `k` by
//! `r_k = (iε + λ_k Δt/2) / (iε − λ_k Δt/2)`.

use std::path::Path;
use std::time::Instant;

use log::debug;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::band::{BandLu, BandMatrix, Ordering};
use crate::error::{Error, Result};
use crate::fem::{FineOperators, Space, WaveFunction};
use crate::solvers::stationary::{elliptic_project, real_cholesky, GalerkinSpace, SpaceOperators};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub final_time: f64,
    pub epsilon: f64,
    /// Conserved quantities are logged every `log_stride` steps (and at the end).
    pub log_stride: usize,
}

impl EvolutionConfig {
    pub fn new(final_time: f64, dt: f64, epsilon: f64) -> Result<Self> {
        if !(dt > 0.0 && final_time > 0.0 && epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need positive T, dt and epsilon (got {final_time}, {dt}, {epsilon})"
            )));
        }
        let n_steps = (final_time / dt).round() as usize;
        if n_steps == 0 || (n_steps as f64 * dt - final_time).abs() > 1e-9 * final_time {
            return Err(Error::InvalidParameter(format!(
                "T = {final_time} is not an integer multiple of dt = {dt}"
            )));
        }
        Ok(Self {
            dt,
            n_steps,
            final_time,
            epsilon,
            log_stride: (n_steps / 100).max(1),
        })
    }

    pub fn with_log_stride(mut self, stride: usize) -> Self {
        self.log_stride = stride.max(1);
        self
    }

    fn logs_at(&self, step: usize) -> bool {
        step % self.log_stride == 0 || step == self.n_steps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationSample {
    pub step: usize,
    pub time: f64,
    /// `‖Uⁿ‖_M`.
    pub mass: f64,
    /// `a(Uⁿ, Uⁿ)`.
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryResult {
    pub final_state: WaveFunction,
    pub log: Vec<ConservationSample>,
    pub wall_time: f64,
}

impl TrajectoryResult {
    /// Largest relative deviation of the logged mass from its initial value.
    pub fn mass_drift(&self) -> f64 {
        drift(self.log.iter().map(|s| s.mass))
    }

    pub fn energy_drift(&self) -> f64 {
        drift(self.log.iter().map(|s| s.energy))
    }

    /// Writes the log as CSV with columns `step,time,mass,energy`.
    pub fn write_log_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|source| Error::Csv {
            path: path.into(),
            source,
        })?;
        for s in &self.log {
            w.serialize(s).map_err(|source| Error::Csv {
                path: path.into(),
                source,
            })?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn drift(values: impl Iterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.collect();
    let Some(&first) = values.first() else {
        return 0.0;
    };
    values
        .iter()
        .map(|v| (v - first).abs() / first.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

fn check_operators(ops: &SpaceOperators, u0: &WaveFunction) -> Result<()> {
    if u0.space != ops.space {
        return Err(Error::SpaceMismatch {
            expected: ops.space,
            found: u0.space,
        });
    }
    let n = ops.mass.nrows();
    for (m, what) in [(&ops.mass, "mass"), (&ops.system, "system")] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::InvalidParameter(format!("{what} matrix is not {n} × {n}")));
        }
    }
    if u0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: u0.len(),
        });
    }
    Ok(())
}

/// Factored Crank–Nicolson step with banded operators.
#[derive(Debug, Clone)]
pub struct CnStepper {
    ordering: Ordering,
    lhs: BandLu<Complex64>,
    rhs: BandMatrix<Complex64>,
    mass: BandMatrix<Complex64>,
    system: BandMatrix<Complex64>,
}

impl CnStepper {
    pub fn new(ops: &SpaceOperators, dt: f64, epsilon: f64) -> Result<Self> {
        Self::build(ops, dt, epsilon, false)
    }

    /// The inverse step: the two sides of the scheme swapped.
    pub fn reversed(ops: &SpaceOperators, dt: f64, epsilon: f64) -> Result<Self> {
        Self::build(ops, dt, epsilon, true)
    }

    fn build(ops: &SpaceOperators, dt: f64, epsilon: f64, reverse: bool) -> Result<Self> {
        let n = ops.mass.nrows();
        let ordering = Ordering::interleaved(n);
        let mut entries = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let (m, a) = (ops.mass[(i, j)], ops.system[(i, j)]);
                if m != 0.0 || a != 0.0 {
                    entries.push((i, j, m, a));
                }
            }
        }
        let half = if reverse { -0.5 * dt } else { 0.5 * dt };
        let band = |f: &dyn Fn(f64, f64) -> Complex64| {
            BandMatrix::from_node_entries(&ordering, entries.iter().map(|&(i, j, m, a)| (i, j, f(m, a))))
        };
        let lhs = band(&|m, a| Complex64::new(-half * a, epsilon * m)).factor()?;
        let rhs = band(&|m, a| Complex64::new(half * a, epsilon * m));
        let mass = band(&|m, _| Complex64::new(m, 0.0));
        let system = band(&|_, a| Complex64::new(a, 0.0));
        Ok(Self {
            ordering,
            lhs,
            rhs,
            mass,
            system,
        })
    }

    /// Half bandwidths of the reordered operators.
    pub fn bandwidths(&self) -> (usize, usize) {
        self.rhs.bandwidths()
    }

    /// One step in node ordering.
    pub fn step(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut x = self.ordering.permute(u);
        let mut y = vec![Complex64::zero(); x.len()];
        self.step_permuted(&mut x, &mut y);
        self.ordering.unpermute(&x)
    }

    fn step_permuted(&self, x: &mut [Complex64], scratch: &mut [Complex64]) {
        self.rhs.matvec(x, scratch);
        self.lhs.solve_in_place(scratch);
        x.copy_from_slice(scratch);
    }

    fn observe(&self, x: &[Complex64]) -> (f64, f64) {
        let mass = self.mass.quadratic_form(x, |z| z.conj()).re.max(0.0).sqrt();
        let energy = self.system.quadratic_form(x, |z| z.conj()).re;
        (mass, energy)
    }

    pub fn run(&self, u0: &[Complex64], config: &EvolutionConfig) -> (Vec<Complex64>, Vec<ConservationSample>) {
        let mut x = self.ordering.permute(u0);
        let mut scratch = vec![Complex64::zero(); x.len()];
        let mut log = Vec::new();
        for step in 0..=config.n_steps {
            if step > 0 {
                self.step_permuted(&mut x, &mut scratch);
            }
            if config.logs_at(step) {
                let (mass, energy) = self.observe(&x);
                log.push(ConservationSample {
                    step,
                    time: step as f64 * config.dt,
                    mass,
                    energy,
                });
            }
        }
        (self.ordering.unpermute(&x), log)
    }
}

/// Crank–Nicolson propagation in the generalized eigenbasis of `(A, M)`.
#[derive(Debug, Clone)]
pub struct ModalPropagator {
    /// Columns are `M`-orthonormal eigenvectors.
    vectors: DMatrix<f64>,
    /// Maps a state to its modal coefficients (`Vᵀ M`).
    analysis: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    /// `arg r_k`.
    phases: Vec<f64>,
}

impl ModalPropagator {
    pub fn new(ops: &SpaceOperators, dt: f64, epsilon: f64) -> Result<Self> {
        let chol = real_cholesky(&ops.mass, "space mass matrix")?;
        let l = chol.l();
        let x = l
            .solve_lower_triangular(&ops.system)
            .ok_or_else(|| Error::SingularSystem("mass factor is singular".into()))?;
        let b = l
            .solve_lower_triangular(&x.transpose())
            .ok_or_else(|| Error::SingularSystem("mass factor is singular".into()))?;
        let b = (&b + b.transpose()) * 0.5;
        let eig = SymmetricEigen::new(b);
        let vectors = l
            .transpose()
            .solve_upper_triangular(&eig.eigenvectors)
            .ok_or_else(|| Error::SingularSystem("mass factor is singular".into()))?;
        let analysis = (l * &eig.eigenvectors).transpose();
        let phases = eig
            .eigenvalues
            .iter()
            .map(|&lambda| {
                let half = 0.5 * lambda * dt;
                (Complex64::new(half, epsilon) / Complex64::new(-half, epsilon)).arg()
            })
            .collect();
        Ok(Self {
            vectors,
            analysis,
            eigenvalues: eig.eigenvalues,
            phases,
        })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn modal_coefficients(&self, u: &[Complex64]) -> Vec<Complex64> {
        complex_matvec(&self.analysis, u)
    }

    /// The state after `steps` steps (negative counts step backwards).
    pub fn propagate(&self, coefficients: &[Complex64], steps: i64) -> Vec<Complex64> {
        let c: Vec<Complex64> = coefficients
            .iter()
            .zip(&self.phases)
            .map(|(c, &theta)| c * Complex64::from_polar(1.0, theta * steps as f64))
            .collect();
        complex_matvec(&self.vectors, &c)
    }

    pub fn run(&self, u0: &[Complex64], config: &EvolutionConfig) -> (Vec<Complex64>, Vec<ConservationSample>) {
        let c = self.modal_coefficients(u0);
        let mut log = Vec::new();
        let mut last = u0.to_vec();
        for step in 0..=config.n_steps {
            if config.logs_at(step) {
                if step > 0 {
                    last = self.propagate(&c, step as i64);
                }
                let cs = self.modal_coefficients(&last);
                log.push(ConservationSample {
                    step,
                    time: step as f64 * config.dt,
                    mass: cs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
                    energy: cs
                        .iter()
                        .zip(self.eigenvalues.iter())
                        .map(|(z, l)| z.norm_sqr() * l)
                        .sum(),
                });
            }
        }
        (last, log)
    }
}

fn complex_matvec(a: &DMatrix<f64>, x: &[Complex64]) -> Vec<Complex64> {
    let re = a * DVector::from_iterator(x.len(), x.iter().map(|z| z.re));
    let im = a * DVector::from_iterator(x.len(), x.iter().map(|z| z.im));
    re.iter()
        .zip(im.iter())
        .map(|(&a, &b)| Complex64::new(a, b))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CnMethod {
    /// Whichever of factored stepping and modal propagation is cheaper.
    #[default]
    Auto,
    Factored,
    Modal,
}

/// Operators whose reordered band is wider than this fraction of the dimension
/// are always propagated modally under [`CnMethod::Auto`].
const DENSE_BAND_FRACTION: f64 = 0.25;

/// Auto selection: modal propagation when the band is dense or when the
/// eigendecomposition (about `n³` work) is cheaper than stepping.
fn prefers_modal(ops: &SpaceOperators, n_steps: usize) -> bool {
    let n = ops.mass.nrows();
    let ordering = Ordering::interleaved(n);
    let mut widest = 0;
    for j in 0..n {
        for i in 0..n {
            if ops.mass[(i, j)] != 0.0 || ops.system[(i, j)] != 0.0 {
                let (p, q) = (ordering.position(i), ordering.position(j));
                widest = widest.max(p.abs_diff(q));
            }
        }
    }
    let nf = n as f64;
    let stepping = 4.0 * n_steps as f64 * nf * (2 * widest + 1) as f64;
    widest as f64 > DENSE_BAND_FRACTION * nf || nf * nf * nf < stepping
}

/// Crank–Nicolson trajectory of `u0` in a Galerkin space.
pub fn cn_evolve(
    ops: &SpaceOperators,
    u0: &WaveFunction,
    config: &EvolutionConfig,
    method: CnMethod,
) -> Result<TrajectoryResult> {
    check_operators(ops, u0)?;
    let start = Instant::now();
    let modal = match method {
        CnMethod::Auto => prefers_modal(ops, config.n_steps),
        CnMethod::Factored => false,
        CnMethod::Modal => true,
    };
    let (state, log) = if modal {
        ModalPropagator::new(ops, config.dt, config.epsilon)?.run(&u0.coefficients, config)
    } else {
        CnStepper::new(ops, config.dt, config.epsilon)?.run(&u0.coefficients, config)
    };
    let wall_time = start.elapsed().as_secs_f64();
    debug!(
        "{} CN: {} steps of {:.3e} in {wall_time:.2}s",
        if modal { "modal" } else { "factored" },
        config.n_steps,
        config.dt
    );
    Ok(TrajectoryResult {
        final_state: WaveFunction::new(ops.space, state),
        log,
        wall_time,
    })
}

/// A trajectory together with the fine nodal values of its final state.
#[derive(Debug, Clone)]
pub struct SpaceTrajectory {
    pub trajectory: TrajectoryResult,
    pub final_fine: WaveFunction,
}

/// Elliptic projection of fine initial data followed by CN in `space`.
pub fn evolve_in_space(
    space: &GalerkinSpace,
    fine: &FineOperators,
    u0: &WaveFunction,
    config: &EvolutionConfig,
    method: CnMethod,
) -> Result<SpaceTrajectory> {
    let initial = elliptic_project(space, u0, fine)?;
    let trajectory = cn_evolve(space.operators(), &initial.coefficients, config, method)?;
    let final_fine = space.prolong(&trajectory.final_state)?;
    Ok(SpaceTrajectory {
        trajectory,
        final_fine,
    })
}

/// Crank–Nicolson with standard P1 elements on the coarse mesh.
pub fn fem_cn_evolve(
    fine: &FineOperators,
    u0: &WaveFunction,
    config: &EvolutionConfig,
) -> Result<SpaceTrajectory> {
    if u0.space != Space::FineNodal {
        return Err(Error::SpaceMismatch {
            expected: Space::FineNodal,
            found: u0.space,
        });
    }
    let space = GalerkinSpace::coarse_p1(fine)?;
    evolve_in_space(&space, fine, u0, config, CnMethod::Auto)
}
