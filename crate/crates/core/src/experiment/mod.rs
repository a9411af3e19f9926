//! Experiment configuration and drivers.

pub mod config;
pub mod run;

pub use config::{
    checked, validate_config, BasisSpec, DecaySpec, Diagnostic, ExperimentConfig, MethodName,
    Oversampling, ReferenceSpec, Severity, TimeRefinement,
};
pub use run::{
    cached_reference, compute_reference, reference_hash, run_basis, run_decay, run_experiment,
    write_basis, write_decay, write_outputs, BasisSummary, ExperimentOutput, ReferenceSolution,
    RunOptions,
};
