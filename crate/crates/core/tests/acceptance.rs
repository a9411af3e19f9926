//! Acceptance criteria 1–8. Each test prints one `criterion N: PASS|FAIL` line.
//!
//! The sweeps are expensive; references are cached under the cargo target tmpdir.

use std::f64::consts::PI;
use std::io::Write;
use std::path::PathBuf;

use nalgebra::DMatrix;
use num_complex::Complex64;
use ocms_core::analysis::{global_slope, ConvergenceReport};
use ocms_core::basis::{build_global_basis, build_localized_basis, gradient_gap, measure_decay};
use ocms_core::experiment::{run_experiment, ExperimentConfig, RunOptions};
use ocms_core::fem::{
    assemble_mass, assemble_stiffness, assemble_weighted_mass, local_weighted_mass,
};
use ocms_core::potentials::{GaussRule, PotentialField};
use ocms_core::solvers::{
    cn_evolve, evolve_in_space, fine_stationary_solve, stationary_solve, tssp_evolve, CnMethod,
    EvolutionConfig, GalerkinSpace,
};
use ocms_core::{gaussian_wavepacket, FineOperators, Level, PeriodicGridPair, Potential, Space, WaveFunction};

// Criterion 1
const T1_FEM_TARGET: f64 = 1.0609e-1;
const T1_FEM_BAND: f64 = 0.30;
const T1_MS_MAX: f64 = 1e-3;
const T1_FEM_L2_ORDER: f64 = 1.7;
const T1_MS_L2_ORDER: f64 = 3.5;
const T1_FEM_H1_ORDER: f64 = 1.1;
const T1_MS_H1_ORDER: f64 = 2.7;
// Criterion 2
const T2_MS_MAX: f64 = 5e-4;
const T2_RATIO: f64 = 50.0;
// Criterion 3
const T3_MS_MAX: f64 = 2e-2;
const T3_RATIO: f64 = 8.0;
const T3_TSSP_ORDER_MAX: f64 = 1.5;
// Criterion 4
const DECAY_TARGET: f64 = 1e-6;
// Criterion 5
const GAP_REDUCTION: f64 = 10.0;
const LOCAL_VS_GLOBAL: f64 = 1e-6;
// Criterion 6
const STAT_L2_SLOPE: f64 = 2.7;
const STAT_ENERGY_SLOPE: f64 = 1.8;
// Criterion 7
const CN_DRIFT: f64 = 1e-10;
const TSSP_DRIFT: f64 = 1e-12;
// Criterion 8
const BASIS_TOL: f64 = 1e-10;
const PHASE_TOL: f64 = 1e-12;
const ASSEMBLY_TOL: f64 = 1e-13;

fn verdict(criterion: usize, pass: bool, detail: &str) {
    // written past the test harness capture so every line lands in the log
    let mut out = std::io::stdout().lock();
    let status = if pass { "PASS" } else { "FAIL" };
    writeln!(out, "criterion {criterion}: {status} ({detail})").unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("reference-cache")
}

fn sweep(json: &str) -> ConvergenceReport {
    let config = ExperimentConfig::from_json_str(json).expect("valid config");
    let options = RunOptions {
        cache_dir: Some(cache_dir()),
    };
    run_experiment(&config, &options).expect("sweep runs").report
}

#[test]
fn criterion_1_smooth_coarse_wavelength() {
    let report = sweep(
        r#"{
            "name": "smooth_eps8",
            "potential": {"name": "smooth", "delta": 0.1},
            "epsilon": 0.125,
            "final_time": 0.5,
            "dt": 1e-4,
            "n_coarse": [128, 192, 256, 384, 512],
            "fine_elements": 49152,
            "methods": ["fem-cn", "msfem-localized"],
            "oversampling": {"multiplier": 3},
            "reference": {"method": "tssp", "points": 32768, "dt": 2.5e-6},
            "time_refinement": {"threshold": 0.25, "max_halvings": 4}
        }"#,
    );
    let fem = report.method("fem-cn").unwrap();
    let ms = report.method("msfem-localized").unwrap();
    let fem0 = fem.row(128).unwrap().err_l2;
    let ms0 = ms.row(128).unwrap().err_l2;
    let orders = [
        fem.mean_order_l2(),
        ms.mean_order_l2(),
        fem.mean_order_h1(),
        ms.mean_order_h1(),
    ];
    let pass = (fem0 / T1_FEM_TARGET - 1.0).abs() <= T1_FEM_BAND
        && ms0 <= T1_MS_MAX
        && orders[0] >= T1_FEM_L2_ORDER
        && orders[1] >= T1_MS_L2_ORDER
        && orders[2] >= T1_FEM_H1_ORDER
        && orders[3] >= T1_MS_H1_ORDER;
    verdict(
        1,
        pass,
        &format!(
            "dt = {:e}; H = pi/64: FEM {fem0:.4e}, MsFEM {ms0:.4e}; mean orders L2 {:.2}/{:.2}, H1 {:.2}/{:.2}",
            report.metadata.dt, orders[0], orders[1], orders[2], orders[3]
        ),
    );
}

#[test]
fn criterion_2_smooth_small_epsilon() {
    let report = sweep(
        r#"{
            "name": "smooth_eps32",
            "potential": {"name": "smooth", "delta": 0.041666666666666664},
            "epsilon": 0.03125,
            "final_time": 0.5,
            "dt": 2.5e-5,
            "n_coarse": [192, 256, 384, 512, 768],
            "fine_elements": 49152,
            "methods": ["fem-cn", "msfem-localized"],
            "oversampling": {"multiplier": 3},
            "reference": {"method": "tssp", "points": 8192, "dt": 1e-6}
        }"#,
    );
    let fem = report.method("fem-cn").unwrap();
    let ms = report.method("msfem-localized").unwrap();
    let finest = ms.row(768).unwrap().err_l2;
    let worst_ratio = [384, 512, 768]
        .iter()
        .map(|&n| fem.row(n).unwrap().err_l2 / ms.row(n).unwrap().err_l2)
        .fold(f64::INFINITY, f64::min);
    verdict(
        2,
        finest <= T2_MS_MAX && worst_ratio >= T2_RATIO,
        &format!("H = pi/384: MsFEM {finest:.4e}; min FEM/MsFEM for H <= pi/192: {worst_ratio:.1}"),
    );
}

#[test]
fn criterion_3_discontinuous() {
    let report = sweep(
        r#"{
            "name": "discontinuous_eps8",
            "potential": {"name": "discontinuous", "delta1": 0.2, "delta2": 0.1},
            "epsilon": 0.125,
            "final_time": 0.5,
            "dt": 2.5e-5,
            "n_coarse": [128, 192, 256, 384, 512],
            "fine_elements": 49152,
            "methods": ["fem-cn", "msfem-localized", "tssp"],
            "oversampling": {"multiplier": 2},
            "reference": {"method": "msfem-global", "n_coarse": 2048, "refine_factor": 8, "dt": 1.4901161193847656e-8}
        }"#,
    );
    let fem = report.method("fem-cn").unwrap();
    let ms = report.method("msfem-localized").unwrap();
    let tssp = report.method("tssp").unwrap();
    let ms0 = ms.row(128).unwrap().err_l2;
    let ratio = fem.row(128).unwrap().err_l2 / ms0;
    let tssp_order = tssp.mean_order_l2();
    verdict(
        3,
        ms0 <= T3_MS_MAX && ratio >= T3_RATIO && tssp_order <= T3_TSSP_ORDER_MAX,
        &format!(
            "H = pi/64: MsFEM {ms0:.4e}, FEM/MsFEM {ratio:.1}; TSSP mean L2 order {tssp_order:.2}"
        ),
    );
}

fn smooth_operators(n_coarse: usize, refine: usize) -> FineOperators {
    let grid = PeriodicGridPair::new(n_coarse, refine).unwrap();
    let field = Potential::smooth(0.1).unwrap().sample(&grid).unwrap();
    FineOperators::new(&field, 0.125).unwrap()
}

#[test]
fn criterion_4_exponential_decay() {
    let fine = smooth_operators(64, 32);
    let basis = build_global_basis(&fine).unwrap();
    let mut pass = true;
    let mut worst_beta: f64 = 0.0;
    for j in [0, 13, 26, 38, 51] {
        let p = measure_decay(&basis, j, 31).unwrap();
        let pre = &p.ratios[..=p.saturation.min(p.ratios.len() - 1)];
        let monotone = pre.windows(2).all(|w| w[1] <= w[0]);
        let reaches = pre.iter().any(|&r| r < DECAY_TARGET);
        let beta = p.beta.unwrap_or(f64::INFINITY);
        worst_beta = worst_beta.max(beta);
        pass &= monotone && reaches && beta < 1.0;
    }
    verdict(4, pass, &format!("largest fitted beta {worst_beta:.4}"));
}

#[test]
fn criterion_5_localization() {
    let fine = smooth_operators(64, 32);
    let global = build_global_basis(&fine).unwrap();
    let gap = |m| gradient_gap(&global, &build_localized_basis(&fine, m).unwrap(), &fine.stiffness);
    let reduction = gap(2) / gap(6);

    let m = 3 * 6;
    let eps = 0.125;
    let u0 = WaveFunction::new(
        Space::FineNodal,
        gaussian_wavepacket(eps).unwrap().sample_fine(fine.grid()),
    );
    let config = EvolutionConfig::new(0.5, 1e-4, eps).unwrap();
    let run = |space: GalerkinSpace| {
        evolve_in_space(&space, &fine, &u0, &config, CnMethod::Auto)
            .unwrap()
            .final_fine
            .coefficients
    };
    let a = run(GalerkinSpace::multiscale(global, &fine).unwrap());
    let b = run(GalerkinSpace::multiscale(build_localized_basis(&fine, m).unwrap(), &fine).unwrap());
    let diff: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let rel = fine.l2_norm(&diff) / fine.l2_norm(&a);
    verdict(
        5,
        reduction >= GAP_REDUCTION && rel <= LOCAL_VS_GLOBAL,
        &format!("gap(2)/gap(6) = {reduction:.1}; localized m = {m} vs global: {rel:.3e}"),
    );
}

#[test]
fn criterion_6_stationary_orders() {
    let nf = 8192;
    let grid = PeriodicGridPair::with_fine_elements(64, nf).unwrap();
    let field = Potential::smooth(0.1).unwrap().sample(&grid).unwrap();
    let fine = FineOperators::new(&field, 0.125).unwrap();
    let f = WaveFunction::new(
        Space::FineNodal,
        grid.fine_coordinates()
            .iter()
            .map(|&x| Complex64::new(x.sin(), 0.0))
            .collect(),
    );
    let exact = fine_stationary_solve(&f, &fine).unwrap().coefficients;
    let mut l2 = Vec::new();
    let mut energy = Vec::new();
    for n in [64, 128, 256, 512] {
        let fine_n = fine.with_coarse(n).unwrap();
        let m = 3 * (n as f64).log2().ceil() as usize;
        let space = GalerkinSpace::multiscale(build_localized_basis(&fine_n, m).unwrap(), &fine_n).unwrap();
        let u = stationary_solve(&space, &f, &fine_n).unwrap().fine.coefficients;
        let e: Vec<Complex64> = u.iter().zip(&exact).map(|(a, b)| a - b).collect();
        let h = 2.0 * PI / n as f64;
        l2.push((h, fine.l2_norm(&e) / fine.l2_norm(&exact)));
        energy.push((h, fine.energy_norm(&e) / fine.energy_norm(&exact)));
    }
    let s_l2 = global_slope(&l2).unwrap();
    let s_e = global_slope(&energy).unwrap();
    verdict(
        6,
        s_l2 >= STAT_L2_SLOPE && s_e >= STAT_ENERGY_SLOPE,
        &format!("L2 slope {s_l2:.2}, energy slope {s_e:.2}"),
    );
}

#[test]
fn criterion_7_conservation() {
    let eps = 0.125;
    let fine = smooth_operators(64, 32);
    let u0 = WaveFunction::new(
        Space::FineNodal,
        gaussian_wavepacket(eps).unwrap().sample_fine(fine.grid()),
    );
    let config = EvolutionConfig::new(0.1, 1e-4, eps).unwrap();
    assert_eq!(config.n_steps, 1000);
    let spaces = [
        GalerkinSpace::coarse_p1(&fine).unwrap(),
        GalerkinSpace::multiscale(build_localized_basis(&fine, 6).unwrap(), &fine).unwrap(),
    ];
    let mut cn_drift: f64 = 0.0;
    for space in &spaces {
        for method in [CnMethod::Factored, CnMethod::Modal] {
            let t = evolve_in_space(space, &fine, &u0, &config, method).unwrap().trajectory;
            cn_drift = cn_drift.max(t.mass_drift()).max(t.energy_drift());
        }
    }

    let n = 512;
    let potential = Potential::smooth(0.1).unwrap();
    let init = gaussian_wavepacket(eps).unwrap().sample_nodes(n);
    let long = EvolutionConfig::new(1.0, 1e-4, eps).unwrap();
    assert_eq!(long.n_steps, 10_000);
    let tssp_drift = tssp_evolve(&init, &potential.sample_nodes(n), &long)
        .unwrap()
        .mass_drift();
    verdict(
        7,
        cn_drift <= CN_DRIFT && tssp_drift <= TSSP_DRIFT,
        &format!("CN drift {cn_drift:.2e}, TSSP drift {tssp_drift:.2e}"),
    );
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

fn max_rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    max_abs_diff(a, b) / b.abs().max()
}

#[test]
fn criterion_8_oracle_equivalence() {
    // r = 1: the basis is M⁻¹
    let fine = smooth_operators(32, 1);
    let basis = build_global_basis(&fine).unwrap().to_dense();
    let m_inv = fine.mass.to_dense().try_inverse().unwrap();
    let basis_err = max_abs_diff(&basis, &m_inv);

    // single Fourier mode under constant V: CN multiplies by a scalar per step
    let (n, k, v, eps, dt, steps) = (48usize, 5.0, 1.5, 0.25, 1e-2, 200usize);
    let grid = PeriodicGridPair::new(n, 4).unwrap();
    let fine_c = FineOperators::new(&PotentialField::constant(&grid, v).unwrap(), eps).unwrap();
    let space = GalerkinSpace::coarse_p1(&fine_c).unwrap();
    let h = 2.0 * PI / n as f64;
    let mass_symbol = h * (4.0 + 2.0 * (k * h).cos()) / 6.0;
    let stiff_symbol = (2.0 - 2.0 * (k * h).cos()) / h;
    let lambda = (0.5 * eps * eps * stiff_symbol + v * mass_symbol) / mass_symbol;
    let z = Complex64::new(0.0, dt * lambda / (2.0 * eps));
    let r = (1.0 - z) / (1.0 + z);
    let mode: Vec<Complex64> = (0..n)
        .map(|j| Complex64::from_polar(1.0, k * j as f64 * h))
        .collect();
    let config = EvolutionConfig::new(steps as f64 * dt, dt, eps).unwrap();
    let expected = r.powi(steps as i32);
    let mut phase_err: f64 = 0.0;
    for method in [CnMethod::Factored, CnMethod::Modal] {
        let u0 = WaveFunction::new(Space::CoarseP1, mode.clone());
        let out = cn_evolve(space.operators(), &u0, &config, method).unwrap();
        for (a, b) in out.final_state.coefficients.iter().zip(&mode) {
            phase_err = phase_err.max((a - expected * b).norm());
        }
    }

    // exact integration: P1 mass and stiffness, and linear V against P1 products
    let g = PeriodicGridPair::new(16, 3).unwrap();
    let nf = g.n_fine();
    let hf = g.fine_size();
    let mut mass = DMatrix::zeros(nf, nf);
    let mut stiff = DMatrix::zeros(nf, nf);
    for i in 0..nf {
        let j = (i + 1) % nf;
        mass[(i, i)] = 2.0 * hf / 3.0;
        mass[(i, j)] = hf / 6.0;
        mass[(j, i)] = hf / 6.0;
        stiff[(i, i)] = 2.0 / hf;
        stiff[(i, j)] = -1.0 / hf;
        stiff[(j, i)] = -1.0 / hf;
    }
    let mut assembly_err = max_rel_diff(&assemble_mass(&g, Level::Fine).to_dense(), &mass)
        .max(max_rel_diff(&assemble_stiffness(&g, Level::Fine).to_dense(), &stiff));
    let c = 2.75;
    let weighted = assemble_weighted_mass(&g, &PotentialField::constant(&g, c).unwrap()).unwrap();
    assembly_err = assembly_err.max(max_rel_diff(&weighted.to_dense(), &(mass * c)));
    let (v0, v1) = (0.7, 3.1);
    let gauss = GaussRule::POINTS.map(|t| v0 * (1.0 - t) + v1 * t);
    let local = local_weighted_mass(hf, gauss);
    let exact = [
        [hf * (3.0 * v0 + v1) / 12.0, hf * (v0 + v1) / 12.0],
        [hf * (v0 + v1) / 12.0, hf * (v0 + 3.0 * v1) / 12.0],
    ];
    for a in 0..2 {
        for b in 0..2 {
            assembly_err = assembly_err.max((local[a][b] - exact[a][b]).abs() / exact[a][b]);
        }
    }

    verdict(
        8,
        basis_err <= BASIS_TOL && phase_err <= PHASE_TOL && assembly_err <= ASSEMBLY_TOL,
        &format!("basis {basis_err:.2e}, phase {phase_err:.2e}, assembly {assembly_err:.2e}"),
    );
}
