//! Report serialization. Floats use the shortest representation that parses
//! back to the same `f64`; non-finite values become `null` in JSON and an
//! empty field in CSV.

use std::fs;
use std::path::Path;

use dgrkit::bounds::InstabilityEstimate;
use dgrkit::harness::{Summary, TrajectoryLog};
use dgrkit::regan::RegularizabilityReport;
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct AnalyzeJson {
    #[serde(rename = "rho_A")]
    pub rho_a: Option<f64>,
    #[serde(rename = "rho_Atilde")]
    pub rho_atilde: Option<f64>,
    pub regularizable: bool,
    pub contractible: bool,
    pub stabilizable: bool,
    pub detectable_transpose: bool,
    pub certificate_present: bool,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl From<&RegularizabilityReport> for AnalyzeJson {
    fn from(r: &RegularizabilityReport) -> Self {
        Self {
            rho_a: finite(r.rho_a),
            rho_atilde: finite(r.rho_atilde),
            regularizable: r.regularizable,
            contractible: r.contractible,
            stabilizable: r.stabilizable,
            detectable_transpose: r.detectable_transpose,
            certificate_present: r.lyapunov_p.is_some(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SummaryJson {
    pub controller: &'static str,
    pub steps_run: usize,
    pub peak_norm: Option<f64>,
    pub final_norm: Option<f64>,
    pub first_full_rank_step: Option<usize>,
    pub bound_violations: usize,
    pub switch_step: Option<usize>,
    pub identification_error: Option<f64>,
    pub closed_loop_rho: Option<f64>,
    pub dare_failure: Option<String>,
    pub overflow: bool,
}

impl From<&Summary> for SummaryJson {
    fn from(s: &Summary) -> Self {
        Self {
            controller: s.stats.controller.name(),
            steps_run: s.steps_run,
            peak_norm: finite(s.stats.peak_norm),
            final_norm: finite(s.stats.final_norm),
            first_full_rank_step: s.stats.first_full_rank_step,
            bound_violations: s.stats.bound_violations,
            switch_step: s.switch_step,
            identification_error: s.identification_error.and_then(finite),
            closed_loop_rho: s.closed_loop_rho.and_then(finite),
            dare_failure: s.dare_failure.clone(),
            overflow: s.overflow,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct InstabilityJson {
    pub t: usize,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// One entry per frame vector.
    pub frame: Vec<Vec<f64>>,
}

impl From<&InstabilityEstimate> for InstabilityJson {
    fn from(e: &InstabilityEstimate) -> Self {
        Self {
            t: e.order,
            estimate: e.value,
            lower: e.analytic_lower,
            upper: e.analytic_upper,
            frame: e.frame.column_iter().map(|c| c.iter().copied().collect()).collect(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Numeric(format!("serialization failed: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn io(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

/// `t,x_1..x_n,u_1..u_m,norm_x,norm_z,rank_X,bound,phase`
pub fn write_trajectory(path: &Path, log: &TrajectoryLog) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=log.state_dim).map(|i| format!("x_{i}")));
    header.extend((1..=log.input_dim).map(|i| format!("u_{i}")));
    header.extend(["norm_x", "norm_z", "rank_X", "bound", "phase"].map(String::from));
    w.write_record(&header).map_err(io(path))?;
    for r in &log.rows {
        let mut rec = vec![r.t.to_string()];
        rec.extend(r.x.iter().map(|v| num(*v)));
        rec.extend(r.u.iter().map(|v| num(*v)));
        rec.push(num(r.norm_x));
        rec.push(num(r.norm_z));
        rec.push(r.rank_x.to_string());
        rec.push(r.bound.map(num).unwrap_or_default());
        rec.push(r.phase.tag().to_string());
        w.write_record(&rec).map_err(io(path))?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub struct BoundRow {
    pub t: usize,
    pub m_lower: f64,
    pub m_upper: f64,
    pub l: Option<f64>,
}

/// `t,M_lower,M_upper,L` with squared instability bounds.
pub fn write_bounds(path: &Path, rows: &[BoundRow]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "M_lower", "M_upper", "L"]).map_err(io(path))?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            num(r.m_lower),
            num(r.m_upper),
            r.l.map(num).unwrap_or_default(),
        ])
        .map_err(io(path))?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
