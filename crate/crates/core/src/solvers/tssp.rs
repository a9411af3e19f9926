//! Time-splitting spectral method (Strang splitting) on a uniform periodic grid.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::fem::{Space, WaveFunction};
use crate::solvers::cn::{ConservationSample, EvolutionConfig, TrajectoryResult};

/// Even sizes whose prime factors are 2, 3, 5 or 7.
pub fn is_fft_friendly(n: usize) -> bool {
    if n < 2 || n % 2 != 0 {
        return false;
    }
    let mut m = n;
    for p in [2, 3, 5, 7] {
        while m % p == 0 {
            m /= p;
        }
    }
    m == 1
}

/// Integer wavenumbers in FFT order, with `k ∈ [−n/2, n/2)`.
pub fn wavenumbers(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if i < n / 2 { i as f64 } else { i as f64 - n as f64 })
        .collect()
}

struct Transforms {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Transforms {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    /// Multiplies the Fourier coefficients of `u` by `symbol` (normalization included).
    fn apply_symbol(&mut self, u: &mut [Complex64], symbol: &[Complex64]) {
        self.forward.process_with_scratch(u, &mut self.scratch);
        for (z, s) in u.iter_mut().zip(symbol) {
            *z *= s;
        }
        self.inverse.process_with_scratch(u, &mut self.scratch);
    }
}

fn observe(
    u: &[Complex64],
    potential: &[f64],
    epsilon: f64,
    transforms: &mut Transforms,
) -> (f64, f64) {
    let n = u.len();
    let h = 2.0 * PI / n as f64;
    let mass = (h * u.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
    let mut hat = u.to_vec();
    transforms.forward.process_with_scratch(&mut hat, &mut transforms.scratch);
    // Parseval: ‖u'‖² = 2π/n² Σ k²|û_k|²
    let kinetic: f64 = hat
        .iter()
        .zip(wavenumbers(n))
        .map(|(z, k)| k * k * z.norm_sqr())
        .sum::<f64>()
        * 2.0
        * PI
        / (n * n) as f64;
    let potential_energy: f64 = h * u
        .iter()
        .zip(potential)
        .map(|(z, v)| v * z.norm_sqr())
        .sum::<f64>();
    (mass, 0.5 * epsilon * epsilon * kinetic + potential_energy)
}

/// Strang splitting of `iε u_t = −ε²/2 u_xx + V u` on the nodes `2πi/n`.
pub fn tssp_evolve(
    u0: &[Complex64],
    potential: &[f64],
    config: &EvolutionConfig,
) -> Result<TrajectoryResult> {
    let n = u0.len();
    if !is_fft_friendly(n) {
        return Err(Error::FftSize(n));
    }
    if potential.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: potential.len(),
        });
    }
    let start = Instant::now();
    let (dt, eps) = (config.dt, config.epsilon);
    let half_phase: Vec<Complex64> = potential
        .iter()
        .map(|v| Complex64::from_polar(1.0, -dt * v / (2.0 * eps)))
        .collect();
    let full_phase: Vec<Complex64> = half_phase.iter().map(|z| z * z).collect();
    let inv_n = 1.0 / n as f64;
    let kinetic: Vec<Complex64> = wavenumbers(n)
        .into_iter()
        .map(|k| Complex64::from_polar(inv_n, -eps * dt * k * k / 2.0))
        .collect();

    let mut transforms = Transforms::new(n);
    let mut u = u0.to_vec();
    let mut log = Vec::new();
    let (mass, energy) = observe(&u, potential, eps, &mut transforms);
    log.push(ConservationSample {
        step: 0,
        time: 0.0,
        mass,
        energy,
    });
    // consecutive half phases are merged; `u` carries a pending half phase after each step
    for (z, p) in u.iter_mut().zip(&half_phase) {
        *z *= p;
    }
    for step in 1..=config.n_steps {
        transforms.apply_symbol(&mut u, &kinetic);
        let logging = step % config.log_stride == 0 || step == config.n_steps;
        if logging {
            for (z, p) in u.iter_mut().zip(&half_phase) {
                *z *= p;
            }
            let (mass, energy) = observe(&u, potential, eps, &mut transforms);
            log.push(ConservationSample {
                step,
                time: step as f64 * dt,
                mass,
                energy,
            });
            if step < config.n_steps {
                for (z, p) in u.iter_mut().zip(&half_phase) {
                    *z *= p;
                }
            }
        } else {
            for (z, p) in u.iter_mut().zip(&full_phase) {
                *z *= p;
            }
        }
    }
    Ok(TrajectoryResult {
        final_state: WaveFunction::new(Space::Fourier, u),
        log,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Trigonometric interpolation of periodic samples onto `target` uniform nodes.
///
/// Modes `|k| < min(n, target)/2` are kept; the Nyquist mode of the coarser grid is dropped.
pub fn spectral_resample(u: &[Complex64], target: usize) -> Result<Vec<Complex64>> {
    let n = u.len();
    if n == 0 || target == 0 {
        return Err(Error::InvalidParameter("cannot resample an empty grid".into()));
    }
    if n == target {
        return Ok(u.to_vec());
    }
    let mut planner = FftPlanner::new();
    let mut hat = u.to_vec();
    planner.plan_fft_forward(n).process(&mut hat);
    let cutoff = n.min(target) / 2;
    let mut out = vec![Complex64::new(0.0, 0.0); target];
    let scale = 1.0 / n as f64;
    for (i, k) in wavenumbers(n).into_iter().enumerate() {
        let k = k as i64;
        if k.unsigned_abs() < cutoff as u64 {
            out[k.rem_euclid(target as i64) as usize] += hat[i] * scale;
        }
    }
    planner.plan_fft_inverse(target).process(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_sizes() {
        assert!(is_fft_friendly(8192));
        assert!(is_fft_friendly(49152));
        assert!(is_fft_friendly(210));
        assert!(!is_fft_friendly(22));
        assert!(!is_fft_friendly(15));
        let config = EvolutionConfig::new(0.1, 0.01, 1.0).unwrap();
        let u = vec![Complex64::new(1.0, 0.0); 22];
        assert!(matches!(
            tssp_evolve(&u, &[1.0; 22], &config),
            Err(Error::FftSize(22))
        ));
    }

    #[test]
    fn plane_wave_without_potential_is_exact() {
        let (n, k, eps) = (64, 3.0, 0.1);
        let config = EvolutionConfig::new(0.37, 1e-2, eps).unwrap();
        let x: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
        let u0: Vec<Complex64> = x.iter().map(|&x| Complex64::from_polar(1.0, k * x)).collect();
        let r = tssp_evolve(&u0, &vec![0.0; n], &config).unwrap();
        for (z, &x) in r.final_state.coefficients.iter().zip(&x) {
            let exact = Complex64::from_polar(1.0, k * x - eps * k * k * 0.37 / 2.0);
            assert!((z - exact).norm() < 1e-12);
        }
        assert!(r.mass_drift() < 1e-13);
    }

    #[test]
    fn resampling_is_exact_for_band_limited_data() {
        let f = |x: f64| Complex64::new((3.0 * x).cos(), (5.0 * x).sin()) + 0.5;
        let coarse: Vec<Complex64> = (0..32).map(|i| f(2.0 * PI * i as f64 / 32.0)).collect();
        let fine = spectral_resample(&coarse, 96).unwrap();
        for (i, z) in fine.iter().enumerate() {
            assert!((z - f(2.0 * PI * i as f64 / 96.0)).norm() < 1e-13);
        }
        let back = spectral_resample(&fine, 32).unwrap();
        for (a, b) in back.iter().zip(&coarse) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}
