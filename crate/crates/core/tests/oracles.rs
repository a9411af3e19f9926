//! Independent oracles: reference error tables, closed-form solutions.

use std::f64::consts::PI;

use num_complex::Complex64;
use ocms_core::analysis::{fit_orders, relative_errors};
use ocms_core::basis::build_global_basis;
use ocms_core::potentials::PotentialField;
use ocms_core::solvers::{
    fine_stationary_solve, stationary_solve, tssp_evolve, EvolutionConfig, GalerkinSpace,
};
use ocms_core::{FineOperators, PeriodicGridPair, Space, WaveFunction};

fn h_list(denominators: &[f64]) -> Vec<f64> {
    denominators.iter().map(|d| PI / d).collect()
}

/// Consecutive orders of reference error columns against values computed by hand.
fn assert_orders(h: &[f64], errors: &[f64], expected: &[f64]) {
    let points: Vec<(f64, f64)> = h.iter().copied().zip(errors.iter().copied()).collect();
    let orders = fit_orders(&points).unwrap();
    assert_eq!(orders.len(), expected.len());
    for (o, p) in orders.iter().zip(expected) {
        assert!((o - p).abs() <= 1e-4, "recomputed {o:.5} vs {p}");
    }
}

#[test]
fn first_fem_order_of_the_smooth_table() {
    let o = fit_orders(&[(PI / 64.0, 1.0609e-1), (PI / 96.0, 4.9109e-2)]).unwrap();
    assert!((o[0] - 1.90).abs() <= 0.01);
}

// The error columns are authoritative; several printed order entries disagree
// with them (e.g. 6.64 against a printed 6.17 for π/128 → π/192 at ε = 1/32).
#[test]
fn printed_orders_that_agree_with_their_columns() {
    let o = fit_orders(&[(PI / 128.0, 2.7714e-2), (PI / 192.0, 1.8745e-3)]).unwrap();
    assert!((o[0] - 6.64).abs() < 0.01);
    let h = h_list(&[64.0, 96.0, 128.0]);
    for (errors, printed) in [
        ([2.7487e-4, 3.8263e-5, 1.1229e-5], [4.86, 4.26]),
        ([2.7651e-1, 1.4938e-1, 9.9142e-2], [1.52, 1.43]),
        ([3.6524e-3, 9.8017e-4, 4.0261e-4], [3.24, 3.09]),
    ] {
        let points: Vec<(f64, f64)> = h.iter().copied().zip(errors).collect();
        for (o, p) in fit_orders(&points).unwrap().iter().zip(printed) {
            assert!((o - p).abs() <= 0.006);
        }
    }
}

#[test]
fn smooth_tables_orders() {
    let h1 = h_list(&[64.0, 96.0, 128.0, 192.0, 256.0]);
    assert_orders(&h1, &[1.0609e-1, 4.9109e-2, 2.8067e-2, 1.2637e-2, 7.1021e-3], &[1.8997, 1.9447, 1.9680, 2.0030]);
    assert_orders(&h1, &[2.7487e-4, 3.8263e-5, 1.1229e-5, 2.1894e-6, 8.0399e-7], &[4.8631, 4.2616, 4.0321, 3.4823]);
    assert_orders(&h1, &[2.7651e-1, 1.4938e-1, 9.9142e-2, 5.8818e-2, 4.1849e-2], &[1.5186, 1.4250, 1.2877, 1.1832]);
    assert_orders(&h1, &[3.6524e-3, 9.8017e-4, 4.0261e-4, 1.1748e-4, 4.8910e-5], &[3.2442, 3.0929, 3.0377, 3.0460]);

    let h2 = h_list(&[96.0, 128.0, 192.0, 256.0, 384.0]);
    assert_orders(&h2, &[1.0269, 7.6698e-1, 4.4394e-1, 2.7804e-1, 1.3189e-1], &[1.0145, 1.3485, 1.6265, 1.8394]);
    assert_orders(&h2, &[1.3898e-1, 2.7714e-2, 1.8745e-3, 3.2749e-4, 4.9916e-5], &[5.6048, 6.6432, 6.0645, 4.6394]);
    assert_orders(&h2, &[1.3217, 1.0963, 7.1925e-1, 4.9949e-1, 2.6246e-1], &[0.6499, 1.0395, 1.2674, 1.5870]);
    assert_orders(&h2, &[3.0094e-1, 7.7003e-2, 1.0450e-2, 3.6681e-3, 9.8675e-4], &[4.7381, 4.9258, 3.6392, 3.2383]);
}

#[test]
fn discontinuous_tables_orders() {
    let h1 = h_list(&[64.0, 96.0, 128.0, 192.0, 256.0]);
    assert_orders(&h1, &[4.1036e-1, 2.6171e-1, 2.0189e-1, 1.1358e-1, 9.9578e-2], &[1.1093, 0.9021, 1.4187, 0.4573]);
    assert_orders(&h1, &[1.2790e-1, 6.8296e-2, 4.4099e-2, 2.4116e-2, 1.5917e-2], &[1.5474, 1.5205, 1.4886, 1.4443]);
    assert_orders(&h1, &[8.8626e-3, 4.0528e-3, 2.3565e-3, 1.1604e-3, 6.4039e-4], &[1.9297, 1.8848, 1.7472, 2.0663]);
    assert_orders(&h1, &[5.1651e-1, 3.2669e-1, 2.5942e-1, 1.4208e-1, 1.2934e-1], &[1.1298, 0.8015, 1.4849, 0.3266]);
    assert_orders(&h1, &[3.3974e-1, 2.2411e-1, 1.7045e-1, 1.1976e-1, 9.5007e-2], &[1.0261, 0.9514, 0.8705, 0.8048]);
    assert_orders(&h1, &[5.7921e-2, 4.3351e-2, 3.2635e-2, 2.2383e-2, 1.5132e-2], &[0.7146, 0.9870, 0.9300, 1.3608]);

    let h2 = h_list(&[96.0, 128.0, 192.0, 256.0, 384.0]);
    assert_orders(&h2, &[8.6933e-1, 8.2000e-1, 7.2275e-1, 5.1762e-1, 4.7231e-1], &[0.2031, 0.3113, 1.1604, 0.2259]);
    assert_orders(&h2, &[1.0980, 8.2753e-1, 4.9740e-1, 3.2823e-1, 1.6666e-1], &[0.9830, 1.2555, 1.4449, 1.6716]);
    assert_orders(&h2, &[1.8558e-1, 5.9763e-2, 1.4948e-2, 7.0768e-3, 2.7845e-3], &[3.9387, 3.4178, 2.5992, 2.3005]);
    assert_orders(&h2, &[9.4843e-1, 8.6754e-1, 6.5087e-1, 5.2097e-1, 6.0281e-1], &[0.3099, 0.7087, 0.7738, -0.3599]);
    assert_orders(&h2, &[1.1400, 9.5249e-1, 6.7419e-1, 4.8814e-1, 2.9260e-1], &[0.6247, 0.8523, 1.1225, 1.2622]);
    assert_orders(&h2, &[3.1450e-1, 1.3862e-1, 5.3020e-2, 3.2920e-2, 2.2157e-2], &[2.8478, 2.3703, 1.6567, 0.9765]);
}

fn constant_potential(n_coarse: usize, refine: usize, v: f64, eps: f64) -> FineOperators {
    let grid = PeriodicGridPair::new(n_coarse, refine).unwrap();
    FineOperators::new(&PotentialField::constant(&grid, v).unwrap(), eps).unwrap()
}

fn sine_load(fine: &FineOperators, k: f64) -> WaveFunction {
    WaveFunction::new(
        Space::FineNodal,
        fine.grid()
            .fine_coordinates()
            .iter()
            .map(|&x| Complex64::new((k * x).sin(), 0.0))
            .collect(),
    )
}

// −ε²/2 u'' + c u = sin(kx) has the solution sin(kx) / (ε²k²/2 + c).
#[test]
fn fine_solve_converges_to_the_closed_form() {
    let (eps, c, k) = (0.5, 2.0, 3.0);
    let mut errors = Vec::new();
    for n in [64, 128, 256] {
        let fine = constant_potential(n, 1, c, eps);
        let f = sine_load(&fine, k);
        let u = fine_stationary_solve(&f, &fine).unwrap();
        let scale = 1.0 / (0.5 * eps * eps * k * k + c);
        let exact: Vec<Complex64> = f.coefficients.iter().map(|z| z * scale).collect();
        let d: Vec<Complex64> = u.coefficients.iter().zip(&exact).map(|(a, b)| a - b).collect();
        errors.push((2.0 * PI / n as f64, fine.l2_norm(&d) / fine.l2_norm(&exact)));
    }
    for o in fit_orders(&errors).unwrap() {
        assert!((o - 2.0).abs() < 0.05, "order {o}");
    }
}

// With r = 1 the multiscale space is the whole fine space, so its Galerkin
// solution is the fine solution.
#[test]
fn full_multiscale_space_reproduces_the_fine_solve() {
    let fine = constant_potential(48, 1, 1.5, 0.3);
    let f = sine_load(&fine, 2.0);
    let space = GalerkinSpace::multiscale(build_global_basis(&fine).unwrap(), &fine).unwrap();
    let u = stationary_solve(&space, &f, &fine).unwrap().fine;
    let v = fine_stationary_solve(&f, &fine).unwrap();
    let e = relative_errors(&u, &v, &fine).unwrap();
    assert!(e.l2 < 1e-11 && e.h1 < 1e-11, "{e:?}");
}

// Constant V: a plane wave e^{ikx} only acquires the phase exp(−i(εk²/2 + V/ε)t).
#[test]
fn tssp_plane_wave_with_constant_potential() {
    let (n, k, v, eps, t) = (128, 7.0, 3.0, 0.2, 0.45);
    let config = EvolutionConfig::new(t, 1e-3, eps).unwrap();
    let x: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
    let u0: Vec<Complex64> = x.iter().map(|&x| Complex64::from_polar(1.0, k * x)).collect();
    let r = tssp_evolve(&u0, &vec![v; n], &config).unwrap();
    let phase = -(eps * k * k / 2.0 + v / eps) * t;
    for (z, &x) in r.final_state.coefficients.iter().zip(&x) {
        assert!((z - Complex64::from_polar(1.0, k * x + phase)).norm() < 1e-10);
    }
}

#[test]
fn relative_error_scales_linearly() {
    let fine = constant_potential(16, 4, 1.0, 0.5);
    let u = sine_load(&fine, 1.0);
    let twice = WaveFunction::new(
        Space::FineNodal,
        u.coefficients.iter().map(|z| z * 2.0).collect(),
    );
    let e = relative_errors(&twice, &u, &fine).unwrap();
    assert!((e.l2 - 1.0).abs() < 1e-14 && (e.h1 - 1.0).abs() < 1e-14);
    let zero = relative_errors(&u, &u, &fine).unwrap();
    assert_eq!((zero.l2, zero.h1), (0.0, 0.0));
}
