//! Closed-loop scenario runner.
//!
//! A scenario perturbs a nominal system, draws an initial state, runs one
//! controller for a fixed number of steps and logs every state together with
//! the realized trajectory bound. `DgrThenLqr` runs DGR until the data is
//! informative, identifies `Â`, and then freezes an LQR gain computed on
//! `(Â, B)`.

use rand::{RngCore, SeedableRng};
use rand_distr::{Distribution, Normal};

use crate::bounds::{trajectory_bound_series, HiddenStateTracker};
use crate::error::{invalid, Error, Result};
use crate::numkernel::{operator_norm, solve_dare, spectral_radius, Matrix, Vector};
use crate::regulator::{Dgr, Fdgr, OnlineRegulator};
use crate::sysmodel::{LtiSystem, SimRng};

/// States with a larger norm end the run.
pub const OVERFLOW_NORM: f64 = 1e12;
/// Relative slack in `‖x_t‖ ≤ L_t ‖x_0‖ (1 + slack)`.
pub const BOUND_SLACK: f64 = 1e-8;
/// States smaller than this fraction of the running peak norm are rounding
/// residue and are not checked against the bound.
pub const NUMERICAL_ZERO: f64 = 1e-12;
/// Initial-state standard deviation used when none is configured.
pub const DEFAULT_X0_STD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Controller {
    None,
    Dgr,
    Fdgr,
    /// LQR designed on the nominal (unperturbed) system.
    LqrKnown,
    DgrThenLqr,
}

impl Controller {
    pub fn name(self) -> &'static str {
        match self {
            Controller::None => "none",
            Controller::Dgr => "dgr",
            Controller::Fdgr => "fdgr",
            Controller::LqrKnown => "lqr_known",
            Controller::DgrThenLqr => "dgr_then_lqr",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            Controller::None,
            Controller::Dgr,
            Controller::Fdgr,
            Controller::LqrKnown,
            Controller::DgrThenLqr,
        ]
        .into_iter()
        .find(|c| c.name() == name)
    }

    fn tracks_bound(self) -> bool {
        matches!(self, Controller::Dgr | Controller::Fdgr | Controller::DgrThenLqr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    OpenLoop,
    Dgr,
    Fdgr,
    Lqr,
    /// Identified-system DARE failed; inputs are zero from here on.
    OpenLoopFallback,
}

impl Phase {
    pub fn tag(self) -> &'static str {
        match self {
            Phase::OpenLoop => "open_loop",
            Phase::Dgr => "dgr",
            Phase::Fdgr => "fdgr",
            Phase::Lqr => "lqr",
            Phase::OpenLoopFallback => "open_loop_fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum X0Mode {
    Given(Vector),
    Gaussian { std: f64 },
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub system: LtiSystem,
    /// Entrywise std of the perturbation added to the nominal `A`.
    pub perturb_std: f64,
    pub noise_std: f64,
    pub x0: X0Mode,
    pub controller: Controller,
    pub alpha: f64,
    /// Earliest switch time for `DgrThenLqr`; the switch also waits for
    /// the data matrix to reach full rank. Zero means "as soon as informative".
    pub switch_step: usize,
    pub steps: usize,
    pub seed: u64,
    /// LQR state weight; identity when absent.
    pub lqr_q: Option<Matrix>,
    /// LQR input weight; identity when absent.
    pub lqr_r: Option<Matrix>,
}

impl ScenarioConfig {
    /// Noiseless, unperturbed DGR run of 30 steps from a Gaussian `x_0`.
    pub fn new(system: LtiSystem) -> Self {
        Self {
            noise_std: system.noise_std(),
            system,
            perturb_std: 0.0,
            x0: X0Mode::Gaussian {
                std: DEFAULT_X0_STD,
            },
            controller: Controller::Dgr,
            alpha: 0.0,
            switch_step: 0,
            steps: 30,
            seed: 0,
            lqr_q: None,
            lqr_r: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.system.state_dim();
        let m = self.system.input_dim();
        if self.steps == 0 {
            return Err(invalid("steps must be at least 1"));
        }
        if self.controller == Controller::DgrThenLqr && self.switch_step >= self.steps {
            return Err(invalid(format!(
                "switch_step {} must be below steps {}",
                self.switch_step, self.steps
            )));
        }
        for (name, v) in [
            ("perturb_std", self.perturb_std),
            ("noise_std", self.noise_std),
            ("alpha", self.alpha),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        match &self.x0 {
            X0Mode::Given(x) if x.len() != n => {
                return Err(invalid(format!("x0 has {} entries, expected {n}", x.len())))
            }
            X0Mode::Gaussian { std } if !std.is_finite() || *std <= 0.0 => {
                return Err(invalid(format!("x0 std must be finite and > 0, got {std}")))
            }
            _ => {}
        }
        if let Some(q) = &self.lqr_q {
            if q.shape() != (n, n) {
                return Err(invalid(format!("lqr_q must be {n}x{n}")));
            }
        }
        if let Some(r) = &self.lqr_r {
            if r.shape() != (m, m) {
                return Err(invalid(format!("lqr_r must be {m}x{m}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: usize,
    pub x: Vector,
    /// Input applied at step `t`.
    pub u: Vector,
    pub norm_x: f64,
    /// Norm of the part of `x_t` orthogonal to `x_0, …, x_{t−1}`.
    pub norm_z: f64,
    /// Numerical rank of `[x_0, …, x_t]`.
    pub rank_x: usize,
    /// `L_t ‖x_0‖`, present while the DGR bound applies.
    pub bound: Option<f64>,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub controller: Controller,
    /// Configured horizon; `rows.len() == horizon + 1` unless the run
    /// overflowed.
    pub horizon: usize,
    pub state_dim: usize,
    pub input_dim: usize,
    pub rows: Vec<LogRow>,
    pub overflow: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub controller: Controller,
    pub peak_norm: f64,
    pub final_norm: f64,
    pub first_full_rank_step: Option<usize>,
    pub bound_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub stats: ReportEntry,
    pub steps_run: usize,
    pub overflow: bool,
    pub switch_step: Option<usize>,
    /// `‖Â − A‖/‖A‖` against the simulated (perturbed) plant.
    pub identification_error: Option<f64>,
    /// `ρ(A − BK)` for the final gain on the simulated plant.
    pub closed_loop_rho: Option<f64>,
    pub dare_failure: Option<String>,
}

fn stream(seed: u64, id: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn lqr_gain(a: &Matrix, b: &Matrix, cfg: &ScenarioConfig) -> Result<Matrix> {
    let (n, m) = b.shape();
    let q = cfg.lqr_q.clone().unwrap_or_else(|| Matrix::identity(n, n));
    let r = cfg.lqr_r.clone().unwrap_or_else(|| Matrix::identity(m, m));
    Ok(solve_dare(a, b, &q, &r)?.k)
}

enum Driver {
    Open,
    Online(Box<dyn OnlineRegulator>, Phase),
    Fixed(Matrix, Phase),
}

impl Driver {
    fn input(&self, x: &Vector, m: usize) -> Vector {
        match self {
            Driver::Open => Vector::zeros(m),
            Driver::Online(r, _) => r.input().clone(),
            Driver::Fixed(k, _) => -(k * x),
        }
    }

    fn phase(&self) -> Phase {
        match self {
            Driver::Open => Phase::OpenLoop,
            Driver::Online(_, p) | Driver::Fixed(_, p) => *p,
        }
    }

    fn gain(&self) -> Option<Matrix> {
        match self {
            Driver::Open => None,
            Driver::Online(r, _) => Some(r.gain().clone()),
            Driver::Fixed(k, _) => Some(k.clone()),
        }
    }
}

/// Runs one scenario. Identical configurations give identical logs.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(TrajectoryLog, Summary)> {
    cfg.validate()?;
    let n = cfg.system.state_dim();
    let m = cfg.system.input_dim();
    let perturb_seed = stream(cfg.seed, 1).next_u64();
    let plant = cfg
        .system
        .perturb(cfg.perturb_std, perturb_seed)?
        .with_noise(cfg.noise_std)?;
    let x0 = match &cfg.x0 {
        X0Mode::Given(x) => x.clone(),
        X0Mode::Gaussian { std } => {
            let normal = Normal::new(0.0, *std).map_err(|e| invalid(e.to_string()))?;
            let mut rng = stream(cfg.seed, 2);
            Vector::from_fn(n, |_, _| normal.sample(&mut rng))
        }
    };
    let mut noise_rng = stream(cfg.seed, 3);
    let noisy = cfg.noise_std > 0.0;

    let mut driver = match cfg.controller {
        Controller::None => Driver::Open,
        Controller::Dgr | Controller::DgrThenLqr => {
            Driver::Online(Box::new(Dgr::new(plant.b(), cfg.alpha, &x0)?), Phase::Dgr)
        }
        Controller::Fdgr => {
            Driver::Online(Box::new(Fdgr::new(plant.b(), cfg.alpha, &x0)?), Phase::Fdgr)
        }
        Controller::LqrKnown => Driver::Fixed(
            lqr_gain(cfg.system.a(), cfg.system.b(), cfg)?,
            Phase::Lqr,
        ),
    };

    let mut tracker = HiddenStateTracker::new();
    let mut rows: Vec<LogRow> = Vec::with_capacity(cfg.steps + 1);
    let mut zbar = Vec::new();
    let mut wbar = Vec::new();
    let mut first_full_rank = None;
    let mut switch_at = None;
    let mut identification_error = None;
    let mut dare_failure = None;
    let mut overflow = false;
    let mut x = x0.clone();

    for t in 0..=cfg.steps {
        // Rank of [x_0, …, x_{t−1}] before x_t joins.
        let prior_rank = tracker.rank();
        let split = tracker.push(&x);
        if first_full_rank.is_none() && tracker.rank() == n {
            first_full_rank = Some(t);
        }
        if cfg.controller == Controller::DgrThenLqr
            && switch_at.is_none()
            && t >= cfg.switch_step
            && prior_rank == n
        {
            if let Driver::Online(reg, _) = &driver {
                let a_hat = reg.estimate()?;
                identification_error =
                    Some(operator_norm(&(&a_hat - plant.a()))? / operator_norm(plant.a())?);
                driver = match lqr_gain(&a_hat, plant.b(), cfg) {
                    Ok(k) => Driver::Fixed(k, Phase::Lqr),
                    Err(e) => {
                        log::warn!("DARE on identified system failed: {e}");
                        dare_failure = Some(e.to_string());
                        Driver::Open
                    }
                };
                switch_at = Some(t);
            }
        }
        if matches!(driver.phase(), Phase::Dgr | Phase::Fdgr) {
            zbar.push(split.zbar);
            wbar.push(split.wbar);
        }
        let phase = if dare_failure.is_some() {
            Phase::OpenLoopFallback
        } else {
            driver.phase()
        };
        let u = driver.input(&x, m);
        rows.push(LogRow {
            t,
            x: x.clone(),
            u: u.clone(),
            norm_x: x.norm(),
            norm_z: split.z.norm(),
            rank_x: tracker.rank(),
            bound: None,
            phase,
        });
        if t == cfg.steps {
            break;
        }
        let next = plant.step(&x, &u, if noisy { Some(&mut noise_rng) } else { None })?;
        let nrm = next.norm();
        if !nrm.is_finite() || nrm > OVERFLOW_NORM {
            log::info!("state norm {nrm:e} at step {} exceeds the overflow guard", t + 1);
            overflow = true;
            break;
        }
        if let Driver::Online(reg, _) = &mut driver {
            reg.observe(&next)?;
        }
        x = next;
    }

    // The bound covers every state produced by DGR inputs, which includes
    // the first state after the last DGR step.
    let bound_rows = zbar.len().min(rows.len().saturating_sub(1));
    if cfg.controller.tracks_bound() && !noisy && bound_rows > 0 {
        let series = trajectory_bound_series(&plant, cfg.alpha, &zbar[..bound_rows], &wbar[..bound_rows])?;
        let x0n = x0.norm();
        for (row, l) in rows.iter_mut().zip(&series.l) {
            row.bound = Some(l * x0n);
        }
    }

    let log = TrajectoryLog {
        controller: cfg.controller,
        horizon: cfg.steps,
        state_dim: n,
        input_dim: m,
        rows,
        overflow,
    };
    let stats = report_entry(&log)?;
    let closed_loop_rho = match driver.gain() {
        Some(k) if dare_failure.is_none() => Some(spectral_radius(&(plant.a() - plant.b() * k))?),
        _ => None,
    };
    let summary = Summary {
        stats,
        steps_run: log.rows.len() - 1,
        overflow,
        switch_step: switch_at,
        identification_error,
        closed_loop_rho,
        dare_failure,
    };
    Ok((log, summary))
}

fn report_entry(log: &TrajectoryLog) -> Result<ReportEntry> {
    let last = log.rows.last().ok_or(Error::InsufficientData)?;
    let n = log.state_dim;
    Ok(ReportEntry {
        controller: log.controller,
        peak_norm: log.rows.iter().fold(0.0, |acc, r| acc.max(r.norm_x)),
        final_norm: last.norm_x,
        first_full_rank_step: log.rows.iter().find(|r| r.rank_x == n).map(|r| r.t),
        bound_violations: bound_violations(log, NUMERICAL_ZERO),
    })
}

/// Rows with `‖x_t‖ > L_t‖x_0‖(1 + BOUND_SLACK)`, skipping states below
/// `floor` times the largest norm seen up to that step. `floor = 0` gives
/// the strict count.
pub fn bound_violations(log: &TrajectoryLog, floor: f64) -> usize {
    let mut peak: f64 = 0.0;
    log.rows
        .iter()
        .filter(|r| {
            peak = peak.max(r.norm_x);
            r.norm_x > floor * peak
                && r.bound.is_some_and(|b| r.norm_x > b * (1.0 + BOUND_SLACK))
        })
        .count()
}

/// Per-log statistics for logs that share a horizon.
pub fn compare_report(logs: &[TrajectoryLog]) -> Result<Vec<ReportEntry>> {
    if let Some(first) = logs.first() {
        if logs.iter().any(|l| l.horizon != first.horizon) {
            return Err(invalid("logs have different horizons"));
        }
    }
    logs.iter().map(report_entry).collect()
}
