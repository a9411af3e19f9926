//! Convergence sweeps, decay studies and basis export.

use std::path::{Path, PathBuf};

use log::{info, warn};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    emit_report, phase_aligned_l2_error, relative_errors, ConvergenceReport, ErrorRow,
    MethodResult, ReportMetadata, TimeRefinementStep,
};
use crate::basis::{
    build_global_basis, build_localized_basis, measure_decay, DecayProfile, MultiscaleBasis,
};
use crate::error::{Error, Result};
use crate::experiment::config::{
    checked, Diagnostic, ExperimentConfig, MethodName, ReferenceSpec, TimeRefinement,
};
use crate::fem::{constraint_matrix, prolongation, refine_nodal, FineOperators, Space, WaveFunction};
use crate::mesh::PeriodicGridPair;
use crate::solvers::{
    evolve_in_space, spectral_resample, tssp_evolve, CnMethod, EvolutionConfig, GalerkinSpace,
    TrajectoryResult,
};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Directory for cached reference solutions.
    pub cache_dir: Option<PathBuf>,
}

/// A reference solution on its own grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    /// Spectral samples (trigonometric interpolation) or P1 nodal values.
    pub spectral: bool,
    pub values: Vec<Complex64>,
}

impl ReferenceSolution {
    /// Nodal values on a uniform grid of `n` elements.
    pub fn on_grid(&self, n: usize) -> Result<Vec<Complex64>> {
        let m = self.values.len();
        if self.spectral {
            spectral_resample(&self.values, n)
        } else if n % m == 0 {
            Ok(refine_nodal(&self.values, n / m))
        } else {
            Err(Error::GridMismatch(format!(
                "reference grid of {m} elements is not nested in {n}"
            )))
        }
    }
}

fn reference_key(config: &ExperimentConfig) -> serde_json::Value {
    serde_json::json!({
        "potential": config.potential,
        "epsilon": config.epsilon,
        "initial": config.initial,
        "final_time": config.final_time,
        "reference": config.reference,
    })
}

/// Hex digest identifying a reference computation.
pub fn reference_hash(config: &ExperimentConfig) -> String {
    let digest = Sha256::digest(reference_key(config).to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Computes the reference solution of a resolved configuration.
pub fn compute_reference(config: &ExperimentConfig) -> Result<ReferenceSolution> {
    let spec = config
        .reference
        .ok_or_else(|| Error::InvalidParameter("no reference solution configured".into()))?;
    let initial = config.initial_data();
    let evolution = EvolutionConfig::new(config.final_time, spec.dt(), config.epsilon)?;
    match spec {
        ReferenceSpec::Tssp { points, .. } => {
            info!("reference: TSSP on {points} points, {} steps", evolution.n_steps);
            let u0 = initial.sample_nodes(points);
            let v = config.potential.sample_nodes(points);
            let r = tssp_evolve(&u0, &v, &evolution)?;
            Ok(ReferenceSolution {
                spectral: true,
                values: r.final_state.coefficients,
            })
        }
        ReferenceSpec::MsfemGlobal {
            n_coarse,
            refine_factor,
            ..
        } => {
            info!("reference: global multiscale basis on grid ({n_coarse}, {refine_factor})");
            let grid = PeriodicGridPair::new(n_coarse, refine_factor)?;
            let fine = FineOperators::new(&config.potential.sample(&grid)?, config.epsilon)?;
            let space = GalerkinSpace::multiscale(build_global_basis(&fine)?, &fine)?;
            let u0 = WaveFunction::new(Space::FineNodal, initial.sample_fine(&grid));
            let r = evolve_in_space(&space, &fine, &u0, &evolution, CnMethod::Auto)?;
            Ok(ReferenceSolution {
                spectral: false,
                values: r.final_fine.coefficients,
            })
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CachedReference {
    key: serde_json::Value,
    solution: ReferenceSolution,
}

/// Loads the reference from `cache_dir` when present, computing and storing it otherwise.
pub fn cached_reference(config: &ExperimentConfig, cache_dir: Option<&Path>) -> Result<ReferenceSolution> {
    let Some(dir) = cache_dir else {
        return compute_reference(config);
    };
    let key = reference_key(config);
    let path = dir.join(format!("reference-{}.json", &reference_hash(config)[..16]));
    if let Ok(text) = std::fs::read_to_string(&path) {
        match serde_json::from_str::<CachedReference>(&text) {
            Ok(cached) if cached.key == key => {
                info!("reference loaded from {}", path.display());
                return Ok(cached.solution);
            }
            _ => warn!("ignoring stale reference cache {}", path.display()),
        }
    }
    let solution = compute_reference(config)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let text = serde_json::to_string(&CachedReference {
        key,
        solution: solution.clone(),
    })
    .map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(solution)
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    fine: FineOperators,
    u0: WaveFunction,
    reference: WaveFunction,
}

impl Context<'_> {
    fn evolution(&self, dt: f64) -> Result<EvolutionConfig> {
        EvolutionConfig::new(self.config.final_time, dt, self.config.epsilon)
    }

    fn space(&self, method: MethodName, n: usize) -> Result<(GalerkinSpace, Option<usize>)> {
        let fine = self.fine.with_coarse(n)?;
        match method {
            MethodName::FemCn => Ok((GalerkinSpace::coarse_p1(&fine)?, None)),
            MethodName::MsfemGlobal => {
                Ok((GalerkinSpace::multiscale(build_global_basis(&fine)?, &fine)?, None))
            }
            MethodName::MsfemLocalized => {
                let m = self.config.layers_for(n);
                let basis = build_localized_basis(&fine, m)?;
                Ok((GalerkinSpace::multiscale(basis, &fine)?, Some(m)))
            }
            MethodName::Tssp => unreachable!("TSSP has no Galerkin space"),
        }
    }

    fn evolve(&self, space: &GalerkinSpace, dt: f64) -> Result<(WaveFunction, TrajectoryResult)> {
        let r = evolve_in_space(space, &self.fine, &self.u0, &self.evolution(dt)?, self.config.propagator)?;
        Ok((r.final_fine, r.trajectory))
    }

    fn tssp(&self, n: usize, dt: f64) -> Result<(WaveFunction, TrajectoryResult)> {
        let u0 = self.config.initial_data().sample_nodes(n);
        let v = self.config.potential.sample_nodes(n);
        let r = tssp_evolve(&u0, &v, &self.evolution(dt)?)?;
        let fine = spectral_resample(&r.final_state.coefficients, self.fine.n())?;
        Ok((WaveFunction::new(Space::FineNodal, fine), r))
    }

    fn run(&self, method: MethodName, n: usize, dt: f64) -> Result<Cell> {
        let (fine, trajectory, layers) = if method == MethodName::Tssp {
            let (f, t) = self.tssp(n, dt)?;
            (f, t, None)
        } else {
            let (space, layers) = self.space(method, n)?;
            let (f, t) = self.evolve(&space, dt)?;
            (f, t, layers)
        };
        let errors = relative_errors(&fine, &self.reference, &self.fine)?;
        let aligned = phase_aligned_l2_error(&fine, &self.reference, &self.fine)?;
        info!(
            "{method} N = {n}: err_L2 = {:.4e}, err_H1 = {:.4e} ({:.1}s)",
            errors.l2, errors.h1, trajectory.wall_time
        );
        Ok(Cell {
            row: ErrorRow {
                n_coarse: n,
                h: 2.0 * std::f64::consts::PI / n as f64,
                err_l2: errors.l2,
                err_h1: errors.h1,
                err_l2_phase_aligned: aligned,
            },
            layers,
            trajectory,
        })
    }
}

struct Cell {
    row: ErrorRow,
    layers: Option<usize>,
    trajectory: TrajectoryResult,
}

fn method_context(method: MethodName, n: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::Method {
        method: method.to_string(),
        n_coarse: n,
        source: Box::new(e),
    }
}

/// Halves Δt until the temporal share of the error at the finest H drops below the threshold.
fn refine_time_step(
    ctx: &Context,
    tr: &TimeRefinement,
    dt0: f64,
) -> Result<(f64, Vec<TimeRefinementStep>)> {
    let methods = &ctx.config.methods;
    let method = tr.method.unwrap_or_else(|| {
        [MethodName::MsfemLocalized, MethodName::MsfemGlobal, MethodName::FemCn]
            .into_iter()
            .find(|m| methods.contains(m))
            .unwrap_or(MethodName::FemCn)
    });
    let n = *ctx.config.n_coarse.last().expect("validated sweep");
    let (space, _) = ctx.space(method, n).map_err(method_context(method, n))?;
    let mut steps = Vec::new();
    let mut dt = dt0;
    let (mut current, _) = ctx.evolve(&space, dt)?;
    for _ in 0..=tr.max_halvings {
        let (half, _) = ctx.evolve(&space, dt / 2.0)?;
        let diff: Vec<Complex64> = current
            .coefficients
            .iter()
            .zip(&half.coefficients)
            .map(|(a, b)| a - b)
            .collect();
        let err: Vec<Complex64> = current
            .coefficients
            .iter()
            .zip(&ctx.reference.coefficients)
            .map(|(a, b)| a - b)
            .collect();
        let share = ctx.fine.l2_norm(&diff) / ctx.fine.l2_norm(&err).max(f64::MIN_POSITIVE);
        let accepted = share <= tr.threshold;
        info!("time refinement ({method}, N = {n}): dt = {dt:e}, temporal share {share:.3}");
        steps.push(TimeRefinementStep {
            dt,
            temporal_share: share,
            accepted,
        });
        if accepted {
            return Ok((dt, steps));
        }
        dt /= 2.0;
        current = half;
    }
    dt *= 2.0;
    warn!("time step not saturated after {} halvings; using dt = {dt:e}", tr.max_halvings);
    Ok((dt, steps))
}

pub struct ExperimentOutput {
    pub report: ConvergenceReport,
    /// Conservation logs per `(method, n_coarse)` cell.
    pub trajectories: Vec<(MethodName, usize, TrajectoryResult)>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Runs the convergence sweep described by `config`.
pub fn run_experiment(config: &ExperimentConfig, options: &RunOptions) -> Result<ExperimentOutput> {
    let (config, diagnostics) = checked(config)?;
    for d in &diagnostics {
        warn!("{}", d.message);
    }
    let nf = config.fine_elements.expect("resolved");
    let n0 = config.n_coarse[0];
    let grid = PeriodicGridPair::with_fine_elements(n0, nf)?;
    let fine = FineOperators::new(&config.potential.sample(&grid)?, config.epsilon)?;
    let reference = cached_reference(&config, options.cache_dir.as_deref())?;
    let ctx = Context {
        config: &config,
        u0: WaveFunction::new(Space::FineNodal, config.initial_data().sample_fine(&grid)),
        reference: WaveFunction::new(Space::FineNodal, reference.on_grid(nf)?),
        fine,
    };

    let dt0 = config.dt.expect("resolved");
    let (dt, time_refinement) = match config.time_refinement {
        Some(tr) if config.methods.iter().any(|m| m.uses_cn()) => refine_time_step(&ctx, &tr, dt0)?,
        _ => (dt0, Vec::new()),
    };

    let cells: Vec<(MethodName, usize)> = config
        .methods
        .iter()
        .flat_map(|&m| config.n_coarse.iter().map(move |&n| (m, n)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(m, n)| ctx.run(m, n, dt).map_err(method_context(m, n)))
        .collect::<Result<Vec<_>>>()?;

    let mut methods = Vec::new();
    let mut trajectories = Vec::new();
    for &method in &config.methods {
        // coarsest mesh first, i.e. decreasing H
        let mut rows = Vec::new();
        let mut layers = Vec::new();
        for ((m, n), cell) in cells.iter().zip(&results) {
            if *m == method {
                rows.push(cell.row.clone());
                layers.extend(cell.layers);
                trajectories.push((method, *n, cell.trajectory.clone()));
            }
        }
        methods.push(MethodResult::new(method.as_str(), layers, rows)?);
    }

    let report = ConvergenceReport {
        metadata: ReportMetadata {
            name: config.name.clone(),
            potential: config.potential.name().to_string(),
            epsilon: config.epsilon,
            deltas: config.potential.delta_tags(),
            dt,
            final_time: config.final_time,
            fine_elements: nf,
            oversampling: config.oversampling.describe(config.default_multiplier()),
            reference: config.reference.map(|r| r.describe()).unwrap_or_default(),
        },
        methods,
        time_refinement,
        config: serde_json::to_value(&config).expect("config serializes"),
    };
    Ok(ExperimentOutput {
        report,
        trajectories,
        diagnostics,
    })
}

/// Writes the report files and per-cell conservation logs under `dir`.
pub fn write_outputs(output: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = emit_report(&output.report, dir)?;
    let logs = dir.join("logs");
    std::fs::create_dir_all(&logs).map_err(|e| Error::io(&logs, e))?;
    for (method, n, t) in &output.trajectories {
        let path = logs.join(format!("{method}_{n}.csv"));
        t.write_log_csv(&path)?;
        written.push(path);
    }
    Ok(written)
}

fn config_grid(n_coarse: usize, refine_factor: usize, config: &ExperimentConfig) -> Result<FineOperators> {
    let grid = PeriodicGridPair::new(n_coarse, refine_factor)?;
    FineOperators::new(&config.potential.sample(&grid)?, config.epsilon)
}

/// Decay profiles of the global basis described by `config.decay`.
pub fn run_decay(config: &ExperimentConfig) -> Result<Vec<DecayProfile>> {
    let (config, _) = checked(config)?;
    let spec = config
        .decay
        .clone()
        .ok_or_else(|| Error::Config(vec!["config has no `decay` section".into()]))?;
    let fine = config_grid(spec.n_coarse, spec.refine_factor, &config)?;
    let basis = build_global_basis(&fine)?;
    let nodes = if spec.nodes.is_empty() {
        (0..5).map(|k| k * spec.n_coarse / 5).collect()
    } else {
        spec.nodes.clone()
    };
    let m_max = spec.m_max.unwrap_or((spec.n_coarse - 1) / 2);
    nodes
        .par_iter()
        .map(|&j| measure_decay(&basis, j, m_max))
        .collect()
}

pub fn write_decay(profiles: &[DecayProfile], dir: &Path) -> Result<Vec<PathBuf>> {
    let decay = dir.join("decay");
    std::fs::create_dir_all(&decay).map_err(|e| Error::io(&decay, e))?;
    let mut written = Vec::new();
    for p in profiles {
        let path = decay.join(format!("node_{}.csv", p.node));
        let mut w = csv::Writer::from_path(&path).map_err(|source| Error::Csv {
            path: path.clone(),
            source,
        })?;
        w.write_record(["m", "ratio"]).map_err(|source| Error::Csv {
            path: path.clone(),
            source,
        })?;
        for (m, r) in p.ratios.iter().enumerate() {
            w.write_record([m.to_string(), format!("{r:.6e}")])
                .map_err(|source| Error::Csv {
                    path: path.clone(),
                    source,
                })?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    let summary = decay.join("summary.json");
    let text = serde_json::to_string_pretty(profiles).map_err(|source| Error::Json {
        path: summary.clone(),
        source,
    })?;
    std::fs::write(&summary, text + "\n").map_err(|e| Error::io(&summary, e))?;
    written.push(summary);
    Ok(written)
}

/// Diagnostics of an exported basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSummary {
    pub n_coarse: usize,
    pub refine_factor: usize,
    pub layers: Option<usize>,
    /// `max |CΨ − I|`.
    pub constraint_residual: f64,
    /// `max |a(ψ_j, w)| / (‖ψ_j‖_e ‖w‖_e)` over seeded random `w` with `Cw = 0`.
    pub orthogonality_probe: f64,
    pub seed: u64,
}

pub fn run_basis(config: &ExperimentConfig) -> Result<(MultiscaleBasis, BasisSummary)> {
    let (config, _) = checked(config)?;
    let spec = config
        .basis
        .clone()
        .ok_or_else(|| Error::Config(vec!["config has no `basis` section".into()]))?;
    let fine = config_grid(spec.n_coarse, spec.refine_factor, &config)?;
    let basis = match spec.layers {
        Some(m) => build_localized_basis(&fine, m)?,
        None => build_global_basis(&fine)?,
    };
    let c = constraint_matrix(&prolongation(fine.grid()), &fine.mass)?;
    let columns: Vec<Vec<f64>> = (0..basis.dim()).map(|j| basis.column(j)).collect();
    let mut residual: f64 = 0.0;
    for (j, col) in columns.iter().enumerate() {
        for (k, v) in c.apply(col).iter().enumerate() {
            residual = residual.max((v - if j == k { 1.0 } else { 0.0 }).abs());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let energy = |v: &[f64]| {
        let av = fine.system.apply(v);
        v.iter().zip(&av).map(|(a, b)| a * b).sum::<f64>().sqrt()
    };
    let a_columns: Vec<Vec<f64>> = columns.iter().map(|c| fine.system.apply(c)).collect();
    let mut probe: f64 = 0.0;
    for _ in 0..spec.probes {
        let v: Vec<f64> = (0..fine.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
        // w = v − Ψ C v lies in the kernel of C
        let cv = c.apply(&v);
        let mut w = v;
        for (col, &coef) in columns.iter().zip(&cv) {
            for (wi, p) in w.iter_mut().zip(col) {
                *wi -= coef * p;
            }
        }
        let norm_w = energy(&w);
        for (col, acol) in columns.iter().zip(&a_columns) {
            let dot: f64 = acol.iter().zip(&w).map(|(a, b)| a * b).sum();
            probe = probe.max(dot.abs() / (energy(col) * norm_w));
        }
    }
    let summary = BasisSummary {
        n_coarse: spec.n_coarse,
        refine_factor: spec.refine_factor,
        layers: spec.layers,
        constraint_residual: residual,
        orthogonality_probe: probe,
        seed: config.seed,
    };
    Ok((basis, summary))
}

pub fn write_basis(basis: &MultiscaleBasis, summary: &BasisSummary, dir: &Path) -> Result<Vec<PathBuf>> {
    let out = dir.join("basis");
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let csv = out.join("basis.csv");
    basis.write_csv(&csv)?;
    let triplets = out.join("basis.triplets");
    basis.write_triplets(&triplets)?;
    let path = out.join("summary.json");
    let text = serde_json::to_string_pretty(summary).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(vec![csv, triplets, path])
}
