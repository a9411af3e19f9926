//! Optimal-compression multiscale finite elements for the periodic
//! semiclassical Schrödinger equation in one dimension.

pub mod analysis;
pub mod band;
pub mod basis;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod mesh;
pub mod potentials;
pub mod solvers;
pub mod sparse;

pub use error::{Error, Result};
pub use fem::{FineOperators, Space, WaveFunction};
pub use mesh::{Level, PeriodicGridPair, Patch};
pub use potentials::{gaussian_wavepacket, InitialData, Potential, PotentialField};
