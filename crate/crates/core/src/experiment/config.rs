//! Experiment descriptions, defaults and validation.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::{InitialData, InitialProfile, Potential, PotentialKind};
use crate::solvers::tssp::is_fft_friendly;
use crate::solvers::CnMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    FemCn,
    MsfemGlobal,
    MsfemLocalized,
    Tssp,
}

impl MethodName {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodName::FemCn => "fem-cn",
            MethodName::MsfemGlobal => "msfem-global",
            MethodName::MsfemLocalized => "msfem-localized",
            MethodName::Tssp => "tssp",
        }
    }

    pub fn uses_cn(&self) -> bool {
        !matches!(self, MethodName::Tssp)
    }
}

impl fmt::Display for MethodName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Oversampling layers: a fixed count, or `multiplier · ⌈log₂ N⌉`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Oversampling {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
}

/// `⌈log₂ n⌉`.
pub fn ceil_log2(n: usize) -> usize {
    (usize::BITS - (n.max(1) - 1).leading_zeros()) as usize
}

impl Oversampling {
    pub fn layers_for(&self, n_coarse: usize, default_multiplier: usize) -> usize {
        self.layers
            .unwrap_or_else(|| self.multiplier.unwrap_or(default_multiplier) * ceil_log2(n_coarse))
    }

    pub fn describe(&self, default_multiplier: usize) -> String {
        match self.layers {
            Some(m) => format!("m = {m}"),
            None => format!(
                "m = {} ceil(log2(2pi/H))",
                self.multiplier.unwrap_or(default_multiplier)
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// Time-splitting spectral solution on `points` nodes.
    Tssp { points: usize, dt: f64 },
    /// Crank–Nicolson with the global multiscale basis.
    MsfemGlobal {
        n_coarse: usize,
        refine_factor: usize,
        dt: f64,
    },
}

impl ReferenceSpec {
    pub fn describe(&self) -> String {
        match *self {
            ReferenceSpec::Tssp { points, dt } => format!("tssp, {points} points, dt = {dt:e}"),
            ReferenceSpec::MsfemGlobal {
                n_coarse,
                refine_factor,
                dt,
            } => format!(
                "msfem-global, H = {}, refine factor {refine_factor}, dt = {dt:e}",
                crate::analysis::mesh_label(n_coarse)
            ),
        }
    }

    pub fn dt(&self) -> f64 {
        match *self {
            ReferenceSpec::Tssp { dt, .. } | ReferenceSpec::MsfemGlobal { dt, .. } => dt,
        }
    }
}

fn default_threshold() -> f64 {
    0.25
}

fn default_halvings() -> usize {
    4
}

/// Δt-halving check: halve Δt until `‖u(Δt) − u(Δt/2)‖ ≤ threshold · ‖u(Δt) − u_ref‖` at the finest H.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeRefinement {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_halvings")]
    pub max_halvings: usize,
    /// Method used for the check (default: the most accurate CN method requested).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodName>,
}

impl Default for TimeRefinement {
    fn default() -> Self {
        Self {
            threshold: default_threshold(),
            max_halvings: default_halvings(),
            method: None,
        }
    }
}

/// Decay study of global basis functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySpec {
    pub n_coarse: usize,
    pub refine_factor: usize,
    /// Nodes to profile (default: five evenly spaced nodes).
    #[serde(default)]
    pub nodes: Vec<usize>,
    /// Largest layer count (default: the first saturated one).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_max: Option<usize>,
}

/// Basis export: global basis, or localized with `layers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub n_coarse: usize,
    pub refine_factor: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    /// Random fine functions used for the orthogonality probe.
    #[serde(default = "default_probes")]
    pub probes: usize,
}

fn default_probes() -> usize {
    20
}

fn default_final_time() -> f64 {
    0.5
}

fn default_initial() -> InitialProfile {
    InitialProfile::GaussianWavepacket
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub potential: Potential,
    pub epsilon: f64,
    #[serde(default = "default_initial")]
    pub initial: InitialProfile,
    #[serde(default = "default_final_time")]
    pub final_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Coarse element counts `N = 2π/H` of the sweep.
    #[serde(default)]
    pub n_coarse: Vec<usize>,
    /// Common fine grid shared by every `H` of the sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_elements: Option<usize>,
    #[serde(default)]
    pub methods: Vec<MethodName>,
    #[serde(default)]
    pub oversampling: Oversampling,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_refinement: Option<TimeRefinement>,
    #[serde(default)]
    pub propagator: CnMethod,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecaySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisSpec>,
}

/// Smooth and custom potentials step with 1e-4, discontinuous ones with 2.5e-5.
pub fn default_dt(potential: &Potential) -> f64 {
    match potential.kind {
        PotentialKind::Discontinuous { .. } => 2.5e-5,
        _ => 1e-4,
    }
}

/// Oversampling multiplier: 2 for discontinuous potentials, 3 otherwise.
pub fn default_multiplier(potential: &Potential) -> usize {
    match potential.kind {
        PotentialKind::Discontinuous { .. } => 2,
        _ => 3,
    }
}

pub fn default_reference(potential: &Potential) -> ReferenceSpec {
    match potential.kind {
        PotentialKind::Discontinuous { .. } => ReferenceSpec::MsfemGlobal {
            n_coarse: 2048,
            refine_factor: 8,
            dt: 2f64.powi(-26),
        },
        _ => ReferenceSpec::Tssp {
            points: 8192,
            dt: 1e-5,
        },
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Smallest element count meeting `h ≤ min(ε, δ)/8` and 16 elements per `2πδ`.
pub fn min_resolving_elements(potential: &Potential, epsilon: f64) -> usize {
    let mut scale = epsilon;
    let mut count = 0.0_f64;
    for d in potential.delta_tags() {
        scale = scale.min(d);
        count = count.max(16.0 / d);
    }
    count.max(16.0 * PI / scale).ceil() as usize
}

/// Resolution rule violations of a fine grid with `n` elements.
fn resolution_problems(potential: &Potential, epsilon: f64, n: usize, what: &str) -> Vec<String> {
    let h = 2.0 * PI / n as f64;
    let mut out = Vec::new();
    let mut scale = epsilon;
    for d in potential.delta_tags() {
        scale = scale.min(d);
        if 2.0 * PI * d / h < 16.0 {
            out.push(format!(
                "{what}: {n} elements give fewer than 16 elements per potential period 2π·{d}"
            ));
        }
    }
    if h > scale / 8.0 {
        out.push(format!(
            "{what}: h = {h:.3e} exceeds min(epsilon, delta)/8 = {:.3e}",
            scale / 8.0
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    fn error(message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            message: message.into(),
        }
    }

    fn warning(message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })
    }

    pub fn initial_data(&self) -> InitialData {
        InitialData {
            epsilon: self.epsilon,
            profile: self.initial,
        }
    }

    pub fn default_multiplier(&self) -> usize {
        default_multiplier(&self.potential)
    }

    pub fn layers_for(&self, n_coarse: usize) -> usize {
        self.oversampling
            .layers_for(n_coarse, self.default_multiplier())
    }

    fn reference_fine_elements(&self) -> Option<usize> {
        match self.reference {
            Some(ReferenceSpec::MsfemGlobal {
                n_coarse,
                refine_factor,
                ..
            }) => Some(n_coarse * refine_factor),
            _ => None,
        }
    }

    /// Fills every default, so that the result reruns identically.
    pub fn resolve(&self) -> Self {
        let mut c = self.clone();
        c.dt.get_or_insert_with(|| default_dt(&self.potential));
        c.n_coarse.sort_unstable();
        c.n_coarse.dedup();
        c.methods.sort_unstable();
        c.methods.dedup();
        if c.oversampling.layers.is_none() {
            c.oversampling
                .multiplier
                .get_or_insert(default_multiplier(&self.potential));
        }
        if c.reference.is_none() && !c.methods.is_empty() {
            c.reference = Some(default_reference(&self.potential));
        }
        if c.fine_elements.is_none() && !c.n_coarse.is_empty() && c.n_coarse.iter().all(|&n| n > 0) {
            let mut base = c.n_coarse.iter().fold(1, |acc, &n| lcm(acc, n));
            if let Some(nr) = c.reference_fine_elements().filter(|&n| n > 0) {
                base = lcm(base, nr);
            }
            if !self.potential.discontinuities().is_empty() && base % 2 == 1 {
                base *= 2;
            }
            let mut need = min_resolving_elements(&self.potential, self.epsilon);
            if c.methods.contains(&MethodName::MsfemLocalized) {
                need = need.max(2 * c.n_coarse.last().copied().unwrap_or(0));
            }
            c.fine_elements = Some(need.div_ceil(base).max(1) * base);
        }
        c
    }
}

/// Errors and warnings of a configuration (after defaulting).
pub fn validate_config(config: &ExperimentConfig) -> Vec<Diagnostic> {
    let c = config.resolve();
    let mut out = Vec::new();
    let mut err = |m: String| out.push(Diagnostic::error(m));

    if !(c.epsilon > 0.0 && c.epsilon.is_finite()) {
        err(format!("epsilon must be positive, got {}", c.epsilon));
    }
    for d in c.potential.delta_tags() {
        if !(d > 0.0 && d.is_finite()) {
            err(format!("potential scale must be positive, got {d}"));
        }
    }
    let (v_min, _) = c.potential.bounds();
    if !(v_min > 0.0) {
        err(format!(
            "potential lower bound {v_min} is not positive (use `shift`)"
        ));
    }
    let dt = c.dt.unwrap_or_default();
    if !(c.final_time > 0.0) || !(dt > 0.0) {
        err("final_time and dt must be positive".to_string());
    } else {
        let steps = (c.final_time / dt).round();
        if steps < 1.0 || (steps * dt - c.final_time).abs() > 1e-9 * c.final_time {
            err(format!(
                "final_time {} is not a multiple of dt {dt}",
                c.final_time
            ));
        }
    }
    if c.methods.is_empty() && c.decay.is_none() && c.basis.is_none() {
        err("no methods requested".to_string());
    }
    if !c.methods.is_empty() && c.n_coarse.is_empty() {
        err("n_coarse list is empty".to_string());
    }
    for &n in &c.n_coarse {
        if n < 4 {
            err(format!("n_coarse = {n} is below the minimum of 4"));
        }
    }
    let discontinuous = !c.potential.discontinuities().is_empty();
    if let Some(nf) = c.fine_elements.filter(|_| !c.n_coarse.is_empty()) {
        for &n in c.n_coarse.iter().filter(|&&n| n > 0) {
            if nf % n != 0 {
                err(format!(
                    "n_coarse = {n} does not divide the fine grid of {nf} elements"
                ));
            } else if c.methods.contains(&MethodName::MsfemLocalized) && nf / n < 2 {
                err(format!(
                    "localized basis at n_coarse = {n} needs a refine factor of at least 2"
                ));
            }
        }
        for m in resolution_problems(&c.potential, c.epsilon, nf, "fine grid") {
            err(m);
        }
        if discontinuous && nf % 2 != 0 {
            err(format!(
                "x = π is not a node of the fine grid with {nf} elements"
            ));
        }
        match c.reference {
            Some(ReferenceSpec::MsfemGlobal {
                n_coarse,
                refine_factor,
                dt,
            }) => {
                let nr = n_coarse * refine_factor;
                if n_coarse < 4 || refine_factor < 1 {
                    err(format!("reference grid ({n_coarse}, {refine_factor}) is invalid"));
                } else {
                    if nf % nr != 0 {
                        err(format!(
                            "reference fine grid of {nr} elements does not divide the fine grid of {nf}"
                        ));
                    }
                    for m in resolution_problems(&c.potential, c.epsilon, nr, "reference grid") {
                        err(m);
                    }
                    if discontinuous && nr % 2 != 0 {
                        err(format!("x = π is not a node of the reference grid with {nr} elements"));
                    }
                }
                check_steps(&mut err, c.final_time, dt, "reference");
            }
            Some(ReferenceSpec::Tssp { points, dt }) => {
                if !is_fft_friendly(points) {
                    err(format!("reference TSSP size {points} is not FFT friendly"));
                }
                check_steps(&mut err, c.final_time, dt, "reference");
            }
            None => {}
        }
    }
    if c.methods.contains(&MethodName::Tssp) {
        for &n in &c.n_coarse {
            if !is_fft_friendly(n) {
                err(format!("tssp at n_coarse = {n} needs an FFT-friendly size"));
            }
        }
    }
    if let Some(tr) = c.time_refinement {
        if !(tr.threshold > 0.0) {
            err("time refinement threshold must be positive".to_string());
        }
        if let Some(m) = tr.method {
            if !m.uses_cn() || !c.methods.contains(&m) {
                err(format!("time refinement method {m} is not a requested CN method"));
            }
        }
    }
    if let Some(d) = &c.decay {
        if d.n_coarse < 4 || d.refine_factor < 1 {
            err("decay grid is invalid".to_string());
        } else if let Some(&j) = d.nodes.iter().find(|&&j| j >= d.n_coarse) {
            err(format!("decay node {j} is out of range"));
        }
    }
    if let Some(b) = &c.basis {
        if b.n_coarse < 4 || b.refine_factor < 1 {
            err("basis grid is invalid".to_string());
        }
        if b.layers == Some(0) {
            err("localized basis needs at least one layer".to_string());
        }
    }

    let multiplier = c.default_multiplier();
    let mut sizes: Vec<usize> = c.n_coarse.clone();
    sizes.extend(c.decay.as_ref().map(|d| d.n_coarse));
    sizes.extend(c.basis.as_ref().map(|b| b.n_coarse));
    for &n in sizes.iter().filter(|&&n| n > 0) {
        let h = 2.0 * PI / n as f64;
        if h > c.epsilon {
            out.push(Diagnostic::warning(format!(
                "H = {h:.4} (n_coarse = {n}) exceeds epsilon = {}",
                c.epsilon
            )));
        }
    }
    if c.methods.contains(&MethodName::MsfemLocalized) {
        for &n in &c.n_coarse {
            let rule = multiplier * ceil_log2(n);
            let m = c.layers_for(n);
            if m < rule {
                out.push(Diagnostic::warning(format!(
                    "{m} oversampling layers at n_coarse = {n} are below the rule {multiplier}·⌈log₂ N⌉ = {rule}"
                )));
            }
        }
    }
    out
}

fn check_steps(err: &mut impl FnMut(String), final_time: f64, dt: f64, what: &str) {
    let steps = (final_time / dt).round();
    if !(dt > 0.0) || steps < 1.0 || (steps * dt - final_time).abs() > 1e-9 * final_time {
        err(format!("{what}: final_time is not a multiple of dt = {dt}"));
    }
}

/// Resolved configuration, or all validation errors at once.
pub fn checked(config: &ExperimentConfig) -> Result<(ExperimentConfig, Vec<Diagnostic>)> {
    let diagnostics = validate_config(config);
    let errors: Vec<String> = diagnostics
        .iter()
        .filter(|d| d.severity == Severity::Error)
        .map(|d| d.message.clone())
        .collect();
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    Ok((config.resolve(), diagnostics))
}
