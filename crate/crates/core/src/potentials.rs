//! Multiscale potentials and initial data.
//!
//! Potentials are described symbolically by [`Potential`] and sampled at the
//! two Gauss points of every fine element into a [`PotentialField`], which is
//! what the assembly routines consume. Spectral solvers sample the same
//! description at grid nodes instead.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{PeriodicGridPair, DOMAIN_LENGTH};

/// Two-point Gauss rule on the reference interval `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct GaussRule;

impl GaussRule {
    pub const POINTS: [f64; 2] = [
        0.5 - 0.288_675_134_594_812_9, // 1/2 - 1/(2√3)
        0.5 + 0.288_675_134_594_812_9,
    ];
    pub const WEIGHTS: [f64; 2] = [0.5, 0.5];

    /// Physical quadrature points of fine element `e`.
    pub fn element_points(grid: &PeriodicGridPair, e: usize) -> [f64; 2] {
        let h = grid.fine_size();
        let x0 = grid.fine_x(e);
        [x0 + h * Self::POINTS[0], x0 + h * Self::POINTS[1]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum PotentialKind {
    /// `cos(x/δ) + 2`.
    Smooth { delta: f64 },
    /// `|x-π|² + 2 + cos(x/δ₁)` on `[0, π]` and `|x-π|² + 2 + cos(x/δ₂)` on `(π, 2π]`.
    Discontinuous { delta1: f64, delta2: f64 },
    /// Periodic piecewise-linear interpolant of `(x, V)` samples.
    Custom { samples: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    #[serde(flatten)]
    pub kind: PotentialKind,
    /// Constant added everywhere, e.g. to make a sign-indefinite potential positive.
    #[serde(default)]
    pub shift: f64,
}

impl Potential {
    pub fn smooth(delta: f64) -> Result<Self> {
        check_scale("delta", delta)?;
        Ok(Self {
            kind: PotentialKind::Smooth { delta },
            shift: 0.0,
        })
    }

    pub fn discontinuous(delta1: f64, delta2: f64) -> Result<Self> {
        check_scale("delta1", delta1)?;
        check_scale("delta2", delta2)?;
        Ok(Self {
            kind: PotentialKind::Discontinuous { delta1, delta2 },
            shift: 0.0,
        })
    }

    pub fn custom(mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidParameter(
                "a custom potential needs at least two samples".into(),
            ));
        }
        for &(x, v) in &samples {
            if !x.is_finite() || !v.is_finite() || !(0.0..DOMAIN_LENGTH).contains(&x) {
                return Err(Error::InvalidParameter(format!(
                    "custom potential sample ({x}, {v}) is not a finite point of [0, 2π)"
                )));
            }
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        if samples.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidParameter(
                "custom potential has repeated x coordinates".into(),
            ));
        }
        Ok(Self {
            kind: PotentialKind::Custom { samples },
            shift: 0.0,
        })
    }

    /// Reads `(x, V)` rows from a CSV file. A non-numeric first row is taken as a header.
    pub fn custom_from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|source| Error::Csv {
                path: path.into(),
                source,
            })?;
        let mut samples = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|source| Error::Csv {
                path: path.into(),
                source,
            })?;
            let parse = |k: usize| record.get(k).and_then(|s| s.parse::<f64>().ok());
            match (parse(0), parse(1)) {
                (Some(x), Some(v)) => samples.push((x, v)),
                _ if row == 0 => continue,
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "{}: row {} is not an (x, V) pair",
                        path.display(),
                        row + 1
                    )))
                }
            }
        }
        Self::custom(samples)
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    /// Short name used in configs and reports.
    pub fn name(&self) -> &'static str {
        match self.kind {
            PotentialKind::Smooth { .. } => "smooth",
            PotentialKind::Discontinuous { .. } => "discontinuous",
            PotentialKind::Custom { .. } => "custom",
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let base = match &self.kind {
            PotentialKind::Smooth { delta } => (x / delta).cos() + 2.0,
            PotentialKind::Discontinuous { delta1, delta2 } => {
                let d = x - PI;
                let osc = if x <= PI {
                    (x / delta1).cos()
                } else {
                    (x / delta2).cos()
                };
                d * d + 2.0 + osc
            }
            PotentialKind::Custom { samples } => interpolate_periodic(samples, x),
        };
        base + self.shift
    }

    /// Analytic (or, for custom data, sampled) bounds `[V_min, V_max]`.
    pub fn bounds(&self) -> (f64, f64) {
        let (lo, hi) = match &self.kind {
            PotentialKind::Smooth { .. } => (1.0, 3.0),
            PotentialKind::Discontinuous { .. } => (1.0, PI * PI + 3.0),
            PotentialKind::Custom { samples } => samples
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, v)| {
                    (lo.min(v), hi.max(v))
                }),
        };
        (lo + self.shift, hi + self.shift)
    }

    /// Oscillation scales of the potential.
    pub fn delta_tags(&self) -> Vec<f64> {
        match &self.kind {
            PotentialKind::Smooth { delta } => vec![*delta],
            PotentialKind::Discontinuous { delta1, delta2 } => vec![*delta1, *delta2],
            PotentialKind::Custom { .. } => Vec::new(),
        }
    }

    pub fn discontinuities(&self) -> Vec<f64> {
        match self.kind {
            PotentialKind::Discontinuous { .. } => vec![PI],
            _ => Vec::new(),
        }
    }

    /// Values at the nodes `2πi/n` of a uniform periodic grid.
    pub fn sample_nodes(&self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| self.eval(DOMAIN_LENGTH * i as f64 / n as f64))
            .collect()
    }

    /// Samples at the Gauss points of every fine element of `grid`.
    pub fn sample(&self, grid: &PeriodicGridPair) -> Result<PotentialField> {
        if !self.discontinuities().is_empty() && grid.n_fine() % 2 != 0 {
            return Err(Error::GridMismatch(format!(
                "x = π is not a node of a fine grid with {} elements",
                grid.n_fine()
            )));
        }
        let (v_min, v_max) = self.bounds();
        let n_fine = grid.n_fine();
        let mut samples = Vec::with_capacity(2 * n_fine);
        for e in 0..n_fine {
            for x in GaussRule::element_points(grid, e) {
                let value = self.eval(x);
                if !(v_min > 0.0 && value >= v_min && value <= v_max) {
                    return Err(Error::PotentialBounds {
                        x,
                        value,
                        v_min,
                        v_max,
                    });
                }
                samples.push(value);
            }
        }
        Ok(PotentialField {
            grid: *grid,
            samples,
            v_min,
            v_max,
            delta_tags: self.delta_tags(),
            discontinuities: self.discontinuities(),
        })
    }
}

fn check_scale(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive, got {value}"
        )))
    }
}

fn interpolate_periodic(samples: &[(f64, f64)], x: f64) -> f64 {
    let x = x.rem_euclid(DOMAIN_LENGTH);
    let idx = samples.partition_point(|&(xs, _)| xs <= x);
    let (left, right) = match idx {
        0 => {
            let (xl, vl) = samples[samples.len() - 1];
            ((xl - DOMAIN_LENGTH, vl), samples[0])
        }
        i if i == samples.len() => {
            let (xr, vr) = samples[0];
            (samples[i - 1], (xr + DOMAIN_LENGTH, vr))
        }
        i => (samples[i - 1], samples[i]),
    };
    let t = (x - left.0) / (right.0 - left.0);
    left.1 + t * (right.1 - left.1)
}

/// A potential sampled at the fine-element Gauss points of one grid.
#[derive(Debug, Clone)]
pub struct PotentialField {
    grid: PeriodicGridPair,
    /// Element-major: `samples[2 * e + q]`.
    samples: Vec<f64>,
    pub v_min: f64,
    pub v_max: f64,
    pub delta_tags: Vec<f64>,
    pub discontinuities: Vec<f64>,
}

impl PotentialField {
    /// A constant potential.
    pub fn constant(grid: &PeriodicGridPair, value: f64) -> Result<Self> {
        if !(value > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "constant potential must be positive, got {value}"
            )));
        }
        Ok(Self {
            grid: *grid,
            samples: vec![value; 2 * grid.n_fine()],
            v_min: value,
            v_max: value,
            delta_tags: Vec::new(),
            discontinuities: Vec::new(),
        })
    }

    pub fn grid(&self) -> &PeriodicGridPair {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn element_samples(&self, e: usize) -> [f64; 2] {
        [self.samples[2 * e], self.samples[2 * e + 1]]
    }
}

pub fn smooth_potential(delta: f64, grid: &PeriodicGridPair) -> Result<PotentialField> {
    Potential::smooth(delta)?.sample(grid)
}

pub fn discontinuous_potential(
    delta1: f64,
    delta2: f64,
    grid: &PeriodicGridPair,
) -> Result<PotentialField> {
    Potential::discontinuous(delta1, delta2)?.sample(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case")]
pub enum InitialProfile {
    /// `(10/π)^{1/4} exp(-5(x-π)²) exp(-i(x-π)²/ε)`.
    GaussianWavepacket,
    /// `exp(ikx)`.
    PlaneWave { wavenumber: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub epsilon: f64,
    pub profile: InitialProfile,
}

impl InitialData {
    pub fn eval(&self, x: f64) -> Complex64 {
        match self.profile {
            InitialProfile::GaussianWavepacket => {
                let d = x - PI;
                let amplitude = (10.0 / PI).powf(0.25) * (-5.0 * d * d).exp();
                Complex64::from_polar(amplitude, -d * d / self.epsilon)
            }
            InitialProfile::PlaneWave { wavenumber } => {
                Complex64::from_polar(1.0, wavenumber as f64 * x)
            }
        }
    }

    pub fn sample_fine(&self, grid: &PeriodicGridPair) -> Vec<Complex64> {
        (0..grid.n_fine()).map(|i| self.eval(grid.fine_x(i))).collect()
    }

    pub fn sample_nodes(&self, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|i| self.eval(DOMAIN_LENGTH * i as f64 / n as f64))
            .collect()
    }
}

/// The Gaussian wave packet used by all experiments.
pub fn gaussian_wavepacket(epsilon: f64) -> Result<InitialData> {
    check_scale("epsilon", epsilon)?;
    Ok(InitialData {
        epsilon,
        profile: InitialProfile::GaussianWavepacket,
    })
}
