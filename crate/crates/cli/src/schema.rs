//! Input file formats.

use std::fs;
use std::path::Path;

use dgrkit::harness::{Controller, ScenarioConfig, X0Mode};
use dgrkit::numkernel::{Matrix, Vector};
use dgrkit::sysmodel::LtiSystem;
use serde::Deserialize;

use crate::CliError;

/// `{"A": [[..]], "B": [[..]], "noise_std": 0.0, "labels": [..]}`
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(default)]
    pub noise_std: Option<f64>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum X0Spec {
    Given(Vec<f64>),
    Gaussian { std: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub system: SystemFile,
    #[serde(default)]
    pub perturb_std: f64,
    /// Falls back to the system's `noise_std`.
    #[serde(default)]
    pub noise_std: Option<f64>,
    #[serde(default)]
    pub x0: Option<X0Spec>,
    #[serde(default = "default_controller")]
    pub controller: String,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub switch_step: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lqr_q: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub lqr_r: Option<Vec<Vec<f64>>>,
}

fn default_controller() -> String {
    "dgr".into()
}

fn default_steps() -> usize {
    30
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Input(format!(
            "{}:{}:{}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

pub fn matrix(rows: &[Vec<f64>], name: &str) -> Result<Matrix, CliError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(CliError::Input(format!("{name} must be a non-empty nested array")));
    }
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(CliError::Input(format!(
            "{name} is not rectangular: row {i} has {} entries, row 0 has {c}",
            rows[i].len()
        )));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl SystemFile {
    pub fn to_system(&self) -> Result<LtiSystem, CliError> {
        let a = matrix(&self.a, "A")?;
        let b = matrix(&self.b, "B")?;
        if let Some(labels) = &self.labels {
            if labels.len() != a.nrows() {
                return Err(CliError::Input(format!(
                    "{} labels for {} states",
                    labels.len(),
                    a.nrows()
                )));
            }
        }
        let sys = LtiSystem::new(a, b)?;
        Ok(match self.noise_std {
            Some(s) => sys.with_noise(s)?,
            None => sys,
        })
    }
}

impl ScenarioFile {
    pub fn to_config(&self) -> Result<ScenarioConfig, CliError> {
        let system = self.system.to_system()?;
        let controller = Controller::from_name(&self.controller).ok_or_else(|| {
            CliError::Input(format!(
                "unknown controller '{}' (expected none, dgr, fdgr, lqr_known, dgr_then_lqr)",
                self.controller
            ))
        })?;
        let mut cfg = ScenarioConfig::new(system);
        cfg.perturb_std = self.perturb_std;
        if let Some(s) = self.noise_std {
            cfg.noise_std = s;
        }
        match &self.x0 {
            Some(X0Spec::Given(v)) => cfg.x0 = X0Mode::Given(Vector::from_vec(v.clone())),
            Some(X0Spec::Gaussian { std }) => cfg.x0 = X0Mode::Gaussian { std: *std },
            None => {}
        }
        cfg.controller = controller;
        cfg.alpha = self.alpha;
        cfg.switch_step = self.switch_step;
        cfg.steps = self.steps;
        cfg.seed = self.seed;
        cfg.lqr_q = self.lqr_q.as_deref().map(|m| matrix(m, "lqr_q")).transpose()?;
        cfg.lqr_r = self.lqr_r.as_deref().map(|m| matrix(m, "lqr_r")).transpose()?;
        Ok(cfg)
    }
}

/// States `x_0, x_1, …` from a trajectory CSV with columns `x_1 … x_n`.
pub fn read_trajectory(path: &Path, n: usize) -> Result<Vec<Vector>, CliError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .clone();
    let cols: Vec<usize> = (1..=n)
        .map(|i| {
            let name = format!("x_{i}");
            headers.iter().position(|h| h == name).ok_or_else(|| {
                CliError::Input(format!("{}: missing column {name}", path.display()))
            })
        })
        .collect::<Result<_, _>>()?;
    let mut states = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let x = cols
            .iter()
            .map(|&c| {
                rec.get(c).unwrap_or("").trim().parse::<f64>().map_err(|e| {
                    CliError::Input(format!("{}: data row {}: {e}", path.display(), line + 1))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        states.push(Vector::from_vec(x));
    }
    if states.is_empty() {
        return Err(CliError::Input(format!("{}: no trajectory rows", path.display())));
    }
    Ok(states)
}
