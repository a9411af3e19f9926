//! Stationary solves and time integrators.

pub mod cn;
pub mod stationary;
pub mod tssp;

pub use cn::{
    cn_evolve, evolve_in_space, fem_cn_evolve, CnMethod, CnStepper, ConservationSample,
    EvolutionConfig, ModalPropagator, SpaceTrajectory, TrajectoryResult,
};
pub use stationary::{
    elliptic_project, fine_stationary_solve, stationary_solve, GalerkinSpace, Projection,
    SpaceOperators,
};
pub use tssp::{is_fft_friendly, spectral_resample, tssp_evolve};
