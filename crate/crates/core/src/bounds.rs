//! Instability numbers and trajectory bounds for DGR.
//!
//! The instability number of order `t` is
//! `M_t(A) = sup Π_{i=1}^t ‖A v_i‖` over orthonormal frames `{v_1, …, v_t}`.
//! It is generally hard to compute, so this module offers analytic bounds
//! from the singular values, a local-ascent estimator that certifies a lower
//! bound, and the realized trajectory bound `L_t` for a recorded run.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numkernel::{ensure_finite, operator_norm, singular_values, svd, Matrix, Vector};
use crate::regan::{atilde, btilde, is_regularizable};
use crate::regulator::delta_alpha;
use crate::sysmodel::{LtiSystem, SimRng};

const ASCENT_REL_GAIN: f64 = 1e-10;
const ASCENT_MAX_SWEEPS: usize = 500;
/// Relative size below which a hidden state counts as zero.
pub const HIDDEN_STATE_TOL: f64 = 1e-10;

fn check_order(a: &Matrix, t: usize) -> Result<usize> {
    if !a.is_square() {
        return Err(crate::error::invalid("instability number needs a square matrix"));
    }
    let n = a.nrows();
    if t == 0 || t > n {
        return Err(Error::InvalidOrder { t, n });
    }
    ensure_finite(a, "A")?;
    Ok(n)
}

fn binomial(t: usize, j: usize) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * (t - i) as f64 / (i + 1) as f64)
}

/// Squared bounds `(lower, upper)` on `M_t(A)²` from the singular values
/// `σ_1 ≥ σ_2 ≥ …`:
///
/// ```text
/// lower = (σ_1²/t)^t
/// upper = lower + Σ_{j=1}^{t−1} (σ_1²/(t−j))^{t−j} C(t,j) δ^j + δ^t,   δ = Σ_{i=2}^t σ_i²
/// ```
pub fn instability_bounds(a: &Matrix, t: usize) -> Result<(f64, f64)> {
    check_order(a, t)?;
    let s = singular_values(a)?;
    let s1 = s[0] * s[0];
    let delta: f64 = s[1..t].iter().map(|v| v * v).sum();
    let lower = (s1 / t as f64).powi(t as i32);
    let mut upper = lower + delta.powi(t as i32);
    for j in 1..t {
        let k = t - j;
        upper += (s1 / k as f64).powi(k as i32) * binomial(t, j) * delta.powi(j as i32);
    }
    Ok((lower, upper))
}

#[derive(Debug, Clone)]
pub struct InstabilityEstimate {
    pub order: usize,
    /// `Π ‖A v_i‖` at [`frame`](Self::frame); a lower bound on `M_t(A)`.
    pub value: f64,
    pub analytic_lower: f64,
    pub analytic_upper: f64,
    /// `n × t`, orthonormal columns.
    pub frame: Matrix,
    /// Index of the start that produced the frame (0 is the singular-vector
    /// construction).
    pub restart: usize,
}

fn frame_value(a: &Matrix, frame: &Matrix) -> f64 {
    frame
        .column_iter()
        .map(|v| (a * v).norm())
        .product()
}

fn orthonormalize(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for j in 0..out.ncols() {
        for _ in 0..2 {
            for i in 0..j {
                let qi = out.column(i).clone_owned();
                let c = qi.dot(&out.column(j));
                let mut col = out.column_mut(j);
                col.axpy(-c, &qi, 1.0);
            }
        }
        let nrm = out.column(j).norm();
        out.column_mut(j).unscale_mut(nrm);
    }
    out
}

/// Top `t` right singular vectors rotated by the Householder reflection that
/// maps `e_1` to `𝟙/√t`, so every column has overlap `1/√t` with the top
/// right singular vector. Its value is at least `(σ_1/√t)^t`.
fn spread_frame(a: &Matrix, t: usize) -> Result<Matrix> {
    let f = svd(a)?;
    let vt = f.v.columns(0, t).into_owned();
    if t == 1 {
        return Ok(vt);
    }
    let mut w = Vector::from_element(t, -1.0 / (t as f64).sqrt());
    w[0] += 1.0;
    let w = w.normalize();
    let h = Matrix::identity(t, t) - (&w * w.transpose()) * 2.0;
    Ok(vt * h)
}

fn random_frame(n: usize, t: usize, seed: u64, restart: usize) -> Matrix {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    let g = Matrix::from_fn(n, t, |_, _| StandardNormal.sample(&mut rng));
    orthonormalize(&g)
}

/// Block-coordinate ascent: each frame vector in turn is replaced by the
/// unit vector in the orthogonal complement of the others that maximizes
/// `‖A v‖`.
fn ascend(a: &Matrix, mut frame: Matrix) -> Result<Matrix> {
    let n = a.nrows();
    let t = frame.ncols();
    let gram = a.transpose() * a;
    let mut value = frame_value(a, &frame);
    for _ in 0..ASCENT_MAX_SWEEPS {
        for i in 0..t {
            let mut proj = Matrix::identity(n, n);
            for j in (0..t).filter(|&j| j != i) {
                let v = frame.column(j);
                proj -= v * v.transpose();
            }
            let restricted = &proj * &gram * &proj;
            let (_, vecs) = crate::numkernel::symmetric_eigen(&restricted)?;
            let cand = &proj * vecs.column(n - 1);
            let nrm = cand.norm();
            if nrm == 0.0 {
                continue;
            }
            let cand = cand / nrm;
            if (a * &cand).norm() > (a * frame.column(i)).norm() {
                frame.set_column(i, &cand);
            }
        }
        frame = orthonormalize(&frame);
        let next = frame_value(a, &frame);
        let gain = next - value;
        value = next.max(value);
        if gain <= ASCENT_REL_GAIN * value.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(frame)
}

/// Best frame found by local ascent from the singular-vector construction
/// and `restarts − 1` random starts. Start `r` depends only on
/// `(seed, r)`, so raising `restarts` never lowers the result.
pub fn estimate_instability(
    a: &Matrix,
    t: usize,
    restarts: usize,
    seed: u64,
) -> Result<InstabilityEstimate> {
    let n = check_order(a, t)?;
    if restarts == 0 {
        return Err(crate::error::invalid("restarts must be at least 1"));
    }
    let (analytic_lower, analytic_upper) = instability_bounds(a, t)?;
    let mut best: Option<(f64, Matrix, usize)> = None;
    for r in 0..restarts {
        let start = if r == 0 {
            spread_frame(a, t)?
        } else {
            random_frame(n, t, seed, r)
        };
        let frame = ascend(a, start)?;
        let value = frame_value(a, &frame);
        if best.as_ref().is_none_or(|(v, _, _)| value > *v) {
            best = Some((value, frame, r));
        }
    }
    let (value, frame, restart) = best.expect("at least one start");
    Ok(InstabilityEstimate {
        order: t,
        value,
        analytic_lower,
        analytic_upper,
        frame,
        restart,
    })
}

/// Coefficients and cumulative values of the trajectory bound
/// `‖x_t‖ ≤ L_t ‖x_0‖`.
#[derive(Debug, Clone)]
pub struct BoundSeries {
    /// `a[t] = ‖Ãᵗ A z̄_0‖` for `t = 0..T`.
    pub a: Vec<f64>,
    /// `b[t][r − 1] = b_{t,r}` for `1 ≤ r ≤ t`.
    pub b: Vec<Vec<f64>>,
    /// `l[0] = 1` and `l[t] = L_t` for `t = 1..=T`.
    pub l: Vec<f64>,
    pub alpha: f64,
}

/// Bound coefficients for a run with normalized hidden states `z̄_r`, `w̄_r`
/// (`r = 0..T`). Entries must be unit vectors or exactly zero, and
/// `z̄_0 = x_0/‖x_0‖`.
///
/// ```text
/// a_t     = ‖Ãᵗ A z̄_0‖
/// b_{t,r} = sqrt(‖Ã^{t−r} B̃ z̄_r‖² + ‖Ã^{t−r} Δ_α w̄_r‖²)
/// L_1     = a_0,   L_{t+1} = a_t + Σ_{r=1}^t b_{t,r} L_r
/// ```
pub fn trajectory_bound_series(
    sys: &LtiSystem,
    alpha: f64,
    zbar: &[Vector],
    wbar: &[Vector],
) -> Result<BoundSeries> {
    if zbar.len() != wbar.len() {
        return Err(crate::error::invalid(format!(
            "{} z directions but {} w directions",
            zbar.len(),
            wbar.len()
        )));
    }
    let n = sys.state_dim();
    if zbar.iter().chain(wbar).any(|v| v.len() != n) {
        return Err(crate::error::invalid("hidden-state length differs from state dimension"));
    }
    let horizon = zbar.len();
    let at = atilde(sys)?;
    let bt = btilde(sys)?;
    let delta = delta_alpha(sys, alpha)?;

    let mut a = Vec::with_capacity(horizon);
    if horizon > 0 {
        let mut v = sys.a() * &zbar[0];
        for _ in 0..horizon {
            a.push(v.norm());
            v = &at * v;
        }
    }

    // Column r holds Ã^{t−r}B̃z̄_r and Ã^{t−r}Δw̄_r, advanced one power per t.
    let mut zc: Vec<Vector> = Vec::with_capacity(horizon);
    let mut wc: Vec<Vector> = Vec::with_capacity(horizon);
    let mut b = vec![Vec::new()];
    let mut l = vec![1.0];
    if horizon > 0 {
        l.push(a[0]);
    }
    for t in 1..horizon {
        for (zv, wv) in zc.iter_mut().zip(wc.iter_mut()) {
            *zv = &at * &*zv;
            *wv = &at * &*wv;
        }
        zc.push(&bt * &zbar[t]);
        wc.push(&delta * &wbar[t]);
        let row: Vec<f64> = zc
            .iter()
            .zip(&wc)
            .map(|(zv, wv)| (zv.norm_squared() + wv.norm_squared()).sqrt())
            .collect();
        let next = a[t] + row.iter().zip(&l[1..=t]).map(|(bv, lv)| bv * lv).sum::<f64>();
        b.push(row);
        l.push(next);
    }
    if l.iter().any(|v| !v.is_finite()) {
        return Err(crate::error::invalid("bound series overflowed"));
    }
    Ok(BoundSeries { a, b, l, alpha })
}

/// One state split against the span of the states seen before it.
#[derive(Debug, Clone)]
pub struct HiddenSplit {
    /// Component orthogonal to the earlier states.
    pub z: Vector,
    /// `z/‖z‖`, or zero when `z` is below `HIDDEN_STATE_TOL·‖x‖`.
    pub zbar: Vector,
    /// Unit vector along `x − z̄‖z‖` (all of `x` when `z̄ = 0`), or zero.
    pub wbar: Vector,
    pub informative: bool,
}

/// Incremental Gram-Schmidt over a trajectory `x_0, x_1, …`. After each
/// [`push`](Self::push), [`rank`](Self::rank) is the numerical rank of the
/// states seen so far.
#[derive(Debug, Clone, Default)]
pub struct HiddenStateTracker {
    basis: Vec<Vector>,
}

impl HiddenStateTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn push(&mut self, x: &Vector) -> HiddenSplit {
        let n = x.len();
        let xn = x.norm();
        let mut z = x.clone();
        for _ in 0..2 {
            for q in &self.basis {
                let c = q.dot(&z);
                z.axpy(-c, q, 1.0);
            }
        }
        let zn = z.norm();
        if xn == 0.0 {
            return HiddenSplit {
                z,
                zbar: Vector::zeros(n),
                wbar: Vector::zeros(n),
                informative: false,
            };
        }
        if zn > HIDDEN_STATE_TOL * xn {
            let w = x - &z;
            let wn = w.norm();
            let zbar = &z / zn;
            self.basis.push(zbar.clone());
            HiddenSplit {
                z,
                zbar,
                wbar: if wn > 0.0 { w / wn } else { Vector::zeros(n) },
                informative: true,
            }
        } else {
            HiddenSplit {
                z,
                zbar: Vector::zeros(n),
                wbar: x / xn,
                informative: false,
            }
        }
    }
}

/// Normalized hidden states `(z̄_r, w̄_r)` of a recorded trajectory, as
/// produced by [`HiddenStateTracker`].
pub fn hidden_directions(states: &[Vector]) -> (Vec<Vector>, Vec<Vector>) {
    let mut tracker = HiddenStateTracker::new();
    states
        .iter()
        .map(|x| {
            let s = tracker.push(x);
            (s.zbar, s.wbar)
        })
        .unzip()
}

/// Bound on the growth ratio from analytic instability-number bounds.
///
/// With `use_special` (requires `R(A) ⊆ R(B)`), returns the bound on
/// `‖x_t‖/‖x_0‖` given by `M_t(A)`. Otherwise (requires `ÃB̃ = 0` and
/// regularizability), returns the bound on `‖x_{t+1}‖/‖x_0‖`
/// `M_{t+1} + a_t + Σ_{r=1}^{t−1} M_r a_{t−r}` with `a_k = ‖Ã^k A‖`.
/// Every `M_r` is replaced by `sqrt` of its analytic upper bound.
pub fn m_based_bound(sys: &LtiSystem, t: usize, use_special: bool) -> Result<f64> {
    let a = sys.a();
    let a_norm = operator_norm(a)?;
    let at = atilde(sys)?;
    let m_upper = |r: usize| instability_bounds(a, r).map(|(_, u)| u.sqrt());
    if use_special {
        if operator_norm(&at)? > 1e-10 * a_norm {
            return Err(Error::BoundNotApplicable("R(A) is not contained in R(B)".into()));
        }
        return m_upper(t);
    }
    let coupling = operator_norm(&(&at * btilde(sys)?))?;
    if coupling > 1e-10 * a_norm * a_norm {
        return Err(Error::BoundNotApplicable(format!(
            "coupling ‖ÃB̃‖ = {coupling:e} is not zero"
        )));
    }
    if !is_regularizable(sys)?.0 {
        return Err(Error::BoundNotApplicable("pair is not regularizable".into()));
    }
    let n = sys.state_dim();
    if t == 0 || t + 1 > n {
        return Err(Error::InvalidOrder { t: t + 1, n });
    }
    let mut powers = Vec::with_capacity(t + 1);
    let mut p = a.clone();
    for _ in 0..=t {
        powers.push(operator_norm(&p)?);
        p = &at * p;
    }
    let mut total = m_upper(t + 1)? + powers[t];
    for r in 1..t {
        total += m_upper(r)? * powers[t - r];
    }
    Ok(total)
}
