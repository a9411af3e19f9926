//! Error metrics, convergence orders and report files.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::least_squares_slope;
use crate::error::{Error, Result};
use crate::fem::{hermitian_form, FineOperators, Space, WaveFunction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeErrors {
    pub l2: f64,
    pub h1: f64,
}

fn check_fine(u: &WaveFunction, fine: &FineOperators) -> Result<()> {
    if u.space != Space::FineNodal {
        return Err(Error::SpaceMismatch {
            expected: Space::FineNodal,
            found: u.space,
        });
    }
    if u.len() != fine.n() {
        return Err(Error::DimensionMismatch {
            expected: fine.n(),
            found: u.len(),
        });
    }
    Ok(())
}

fn difference(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Relative L² and H¹ errors of `u_num` against `u_ref` on a common fine grid.
pub fn relative_errors(
    u_num: &WaveFunction,
    u_ref: &WaveFunction,
    fine: &FineOperators,
) -> Result<RelativeErrors> {
    check_fine(u_num, fine)?;
    check_fine(u_ref, fine)?;
    let r = &u_ref.coefficients;
    let (ref_l2, ref_h1) = (fine.l2_norm(r), fine.h1_norm(r));
    if !(ref_l2 > 0.0) {
        return Err(Error::ZeroReference);
    }
    let d = difference(&u_num.coefficients, r);
    Ok(RelativeErrors {
        l2: fine.l2_norm(&d) / ref_l2,
        h1: fine.h1_norm(&d) / ref_h1,
    })
}

/// Relative L² error after removing the best global phase, `min_θ ‖e^{iθ}u − u_ref‖ / ‖u_ref‖`.
pub fn phase_aligned_l2_error(
    u_num: &WaveFunction,
    u_ref: &WaveFunction,
    fine: &FineOperators,
) -> Result<f64> {
    check_fine(u_num, fine)?;
    check_fine(u_ref, fine)?;
    let (u, r) = (&u_num.coefficients, &u_ref.coefficients);
    let ref_sq = hermitian_form(&fine.mass, r, r).re;
    if !(ref_sq > 0.0) {
        return Err(Error::ZeroReference);
    }
    let num_sq = hermitian_form(&fine.mass, u, u).re;
    let overlap = hermitian_form(&fine.mass, u, r).norm();
    Ok(((num_sq + ref_sq - 2.0 * overlap).max(0.0) / ref_sq).sqrt())
}

fn check_series(points: &[(f64, f64)]) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::InvalidConvergenceData(
            "need at least two (H, error) pairs".into(),
        ));
    }
    for &(h, e) in points {
        if !(h > 0.0 && h.is_finite()) || !(e > 0.0 && e.is_finite()) {
            return Err(Error::InvalidConvergenceData(format!(
                "mesh sizes and errors must be positive (got H = {h}, error = {e})"
            )));
        }
    }
    if points.windows(2).any(|w| w[1].0 >= w[0].0) {
        return Err(Error::InvalidConvergenceData(
            "mesh sizes must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Consecutive orders `log(e_i / e_{i+1}) / log(H_i / H_{i+1})`.
pub fn fit_orders(points: &[(f64, f64)]) -> Result<Vec<f64>> {
    check_series(points)?;
    Ok(points
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect())
}

/// Least-squares slope of `log e` against `log H`.
pub fn global_slope(points: &[(f64, f64)]) -> Result<f64> {
    check_series(points)?;
    let logs: Vec<(f64, f64)> = points.iter().map(|&(h, e)| (h.ln(), e.ln())).collect();
    Ok(least_squares_slope(&logs))
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// `π/k` label of the mesh size of an `n`-element coarse mesh.
pub fn mesh_label(n_coarse: usize) -> String {
    if n_coarse % 2 == 0 {
        format!("pi/{}", n_coarse / 2)
    } else {
        format!("2pi/{n_coarse}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub n_coarse: usize,
    pub h: f64,
    pub err_l2: f64,
    pub err_h1: f64,
    /// Diagnostic only; the tables report raw errors.
    pub err_l2_phase_aligned: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    /// Oversampling layers per row, for localized bases.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layers: Vec<usize>,
    pub rows: Vec<ErrorRow>,
    pub orders_l2: Vec<f64>,
    pub orders_h1: Vec<f64>,
    pub slope_l2: f64,
    pub slope_h1: f64,
}

impl MethodResult {
    /// Rows must be ordered by decreasing `H`.
    pub fn new(method: impl Into<String>, layers: Vec<usize>, rows: Vec<ErrorRow>) -> Result<Self> {
        let l2: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.err_l2)).collect();
        let h1: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.err_h1)).collect();
        let (orders_l2, orders_h1, slope_l2, slope_h1) = if rows.len() >= 2 {
            (fit_orders(&l2)?, fit_orders(&h1)?, global_slope(&l2)?, global_slope(&h1)?)
        } else {
            (Vec::new(), Vec::new(), f64::NAN, f64::NAN)
        };
        Ok(Self {
            method: method.into(),
            layers,
            rows,
            orders_l2,
            orders_h1,
            slope_l2,
            slope_h1,
        })
    }

    pub fn mean_order_l2(&self) -> f64 {
        mean(&self.orders_l2)
    }

    pub fn mean_order_h1(&self) -> f64 {
        mean(&self.orders_h1)
    }

    pub fn row(&self, n_coarse: usize) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.n_coarse == n_coarse)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub name: String,
    pub potential: String,
    pub epsilon: f64,
    pub deltas: Vec<f64>,
    pub dt: f64,
    pub final_time: f64,
    pub fine_elements: usize,
    pub oversampling: String,
    pub reference: String,
}

/// One step of the Δt-halving saturation check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeRefinementStep {
    pub dt: f64,
    /// `‖u(Δt) − u(Δt/2)‖ / ‖u(Δt) − u_ref‖`.
    pub temporal_share: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub metadata: ReportMetadata,
    pub methods: Vec<MethodResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub time_refinement: Vec<TimeRefinementStep>,
    /// The fully resolved experiment configuration.
    pub config: serde_json::Value,
}

impl ConvergenceReport {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == name)
    }

    fn n_coarse_list(&self) -> Vec<usize> {
        let mut ns: Vec<usize> = self
            .methods
            .iter()
            .flat_map(|m| m.rows.iter().map(|r| r.n_coarse))
            .collect();
        ns.sort_unstable();
        ns.dedup();
        ns
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })
    }
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.into(),
        source,
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.6e}")
}

/// Writes `report.json`, `report.csv`, `table.csv` and `series/*.csv` into `dir`.
pub fn emit_report(report: &ConvergenceReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let series_dir = dir.join("series");
    std::fs::create_dir_all(&series_dir).map_err(|e| Error::io(&series_dir, e))?;
    let mut written = Vec::new();

    let json_path = dir.join("report.json");
    let json = serde_json::to_string_pretty(report).map_err(|source| Error::Json {
        path: json_path.clone(),
        source,
    })?;
    std::fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
    written.push(json_path);

    let ns = report.n_coarse_list();
    let value = |m: &MethodResult, n: usize, l2: bool| {
        m.row(n)
            .map(|r| fmt(if l2 { r.err_l2 } else { r.err_h1 }))
            .unwrap_or_default()
    };
    let order = |m: &MethodResult, i: usize, l2: bool| {
        let orders = if l2 { &m.orders_l2 } else { &m.orders_h1 };
        orders.get(i).map(|&o| format!("{o:.4}")).unwrap_or_default()
    };

    // rows by H, with an order row between consecutive H
    let csv_path = dir.join("report.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(csv_error(&csv_path))?;
    let mut header = vec!["row".to_string(), "n_coarse".into(), "H".into()];
    for m in &report.methods {
        header.push(format!("{}_err_l2", m.method));
        header.push(format!("{}_err_h1", m.method));
    }
    w.write_record(&header).map_err(csv_error(&csv_path))?;
    for (i, &n) in ns.iter().enumerate() {
        if i > 0 {
            let mut rec = vec!["order".to_string(), String::new(), String::new()];
            for m in &report.methods {
                rec.push(order(m, i - 1, true));
                rec.push(order(m, i - 1, false));
            }
            w.write_record(&rec).map_err(csv_error(&csv_path))?;
        }
        let mut rec = vec!["error".to_string(), n.to_string(), mesh_label(n)];
        for m in &report.methods {
            rec.push(value(m, n, true));
            rec.push(value(m, n, false));
        }
        w.write_record(&rec).map_err(csv_error(&csv_path))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    written.push(csv_path);

    // columns by H; per method an error row followed by its order row
    let table_path = dir.join("table.csv");
    let mut w = csv::Writer::from_path(&table_path).map_err(csv_error(&table_path))?;
    let mut header = vec!["method".to_string(), "quantity".into()];
    header.extend(ns.iter().map(|&n| mesh_label(n)));
    w.write_record(&header).map_err(csv_error(&table_path))?;
    for l2 in [true, false] {
        let norm = if l2 { "L2" } else { "H1" };
        for m in &report.methods {
            let mut rec = vec![m.method.clone(), format!("err_{norm}")];
            rec.extend(ns.iter().map(|&n| value(m, n, l2)));
            w.write_record(&rec).map_err(csv_error(&table_path))?;
            let mut rec = vec![m.method.clone(), format!("order_{norm}"), String::new()];
            rec.extend((0..ns.len().saturating_sub(1)).map(|i| order(m, i, l2)));
            w.write_record(&rec).map_err(csv_error(&table_path))?;
        }
    }
    w.flush().map_err(|e| Error::io(&table_path, e))?;
    written.push(table_path);

    for m in &report.methods {
        for (norm, l2) in [("l2", true), ("h1", false)] {
            let path = series_dir.join(format!("{}_{norm}.csv", m.method));
            let mut w = csv::Writer::from_path(&path).map_err(csv_error(&path))?;
            w.write_record(["n_coarse", "H", "H_over_pi", "err"])
                .map_err(csv_error(&path))?;
            for r in &m.rows {
                let e = if l2 { r.err_l2 } else { r.err_h1 };
                w.write_record([r.n_coarse.to_string(), fmt(r.h), fmt(r.h / PI), fmt(e)])
                    .map_err(csv_error(&path))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}
