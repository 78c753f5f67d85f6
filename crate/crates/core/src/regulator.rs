//! Online regulators driven by a single observed trajectory.
//!
//! [`Dgr`] recomputes `K_{t+1} = G_α Y_{t+1} X_t†` from scratch at every
//! step. [`FdgrState`] keeps the projector `P_t` onto the data range and the
//! estimate `Q_t = Y_{t+1} X_t†` current through rank-one updates, so a step
//! costs `O(n²)` instead of a fresh pseudoinverse. Both implement
//! [`OnlineRegulator`] and produce the same gains in noiseless runs.

use crate::error::{invalid, Error, Result};
use crate::numkernel::{
    ensure_finite_vec, pinv, pinv_append_column, range_projector, vector_pinv, Matrix, Vector,
    Z_THRESHOLD,
};
use crate::sysmodel::LtiSystem;

/// `G_α = (αI + BᵀB)† Bᵀ`. At `α = 0` this is `B†`.
pub fn g_alpha(b: &Matrix, alpha: f64) -> Result<Matrix> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(invalid(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    let m = b.ncols();
    let inner = Matrix::identity(m, m) * alpha + b.transpose() * b;
    Ok(pinv(&inner)? * b.transpose())
}

/// `Δ_α = B(B† − G_α)A`, the part of the reachable dynamics that the
/// regularized gain leaves uncancelled. `Δ_0 = 0`.
pub fn delta_alpha(sys: &LtiSystem, alpha: f64) -> Result<Matrix> {
    let b = sys.b();
    Ok(b * (pinv(b)? - g_alpha(b, alpha)?) * sys.a())
}

/// Splits `x` into `z = Π_{R(X)⊥} x` and `w = Π_{R(X)} x`. An empty history
/// gives `z = x`, `w = 0`.
pub fn decompose_zw(x_hist: &Matrix, x: &Vector) -> Result<(Vector, Vector)> {
    if x_hist.ncols() == 0 {
        return Ok((x.clone(), Vector::zeros(x.len())));
    }
    if x_hist.nrows() != x.len() {
        return Err(invalid(format!(
            "history has {} rows but state has {} entries",
            x_hist.nrows(),
            x.len()
        )));
    }
    let w = range_projector(x_hist)? * x;
    Ok((x - &w, w))
}

/// A controller that emits an input, watches the plant respond, and updates
/// its gain from what it saw.
pub trait OnlineRegulator {
    /// Input to apply at the current step.
    fn input(&self) -> &Vector;
    /// Records the plant's response to [`input`](Self::input) and returns
    /// the next input.
    fn observe(&mut self, x_next: &Vector) -> Result<Vector>;
    fn gain(&self) -> &Matrix;
    /// Current estimate `Â` of the drift matrix.
    fn estimate(&self) -> Result<Matrix>;
    /// Number of observations processed.
    fn steps(&self) -> usize;
}

fn check_input_matrix(b: &Matrix, x0: &Vector) -> Result<()> {
    if b.nrows() != x0.len() || b.ncols() == 0 {
        return Err(invalid(format!(
            "B is {}x{} but the state has {} entries",
            b.nrows(),
            b.ncols(),
            x0.len()
        )));
    }
    ensure_finite_vec(x0, "initial state")
}

fn check_state(x: &Vector, n: usize) -> Result<()> {
    if x.len() != n {
        return Err(invalid(format!("expected state of length {n}, got {}", x.len())));
    }
    ensure_finite_vec(x, "state")
}

/// Batch DGR.
#[derive(Debug, Clone)]
pub struct Dgr {
    alpha: f64,
    b: Matrix,
    g: Matrix,
    x: Matrix,
    y: Matrix,
    k: Matrix,
    u: Vector,
    q: Option<Matrix>,
}

/// Alias matching the state-object naming used for the recursive variant.
pub type DgrState = Dgr;

impl Dgr {
    /// `X = [x_0]`, `Y = ()`, `K_0 = 0`, so the first input is zero.
    pub fn new(b: &Matrix, alpha: f64, x0: &Vector) -> Result<Self> {
        check_input_matrix(b, x0)?;
        let (n, m) = b.shape();
        Ok(Self {
            alpha,
            b: b.clone(),
            g: g_alpha(b, alpha)?,
            x: Matrix::from_column_slice(n, 1, x0.as_slice()),
            y: Matrix::zeros(n, 0),
            k: Matrix::zeros(m, n),
            u: Vector::zeros(m),
            q: None,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn g_alpha(&self) -> &Matrix {
        &self.g
    }

    /// States observed so far, `[x_0, …, x_t]`.
    pub fn states(&self) -> &Matrix {
        &self.x
    }

    /// Recovered drift samples `y_s = x_{s+1} − B u_s`.
    pub fn recovered(&self) -> &Matrix {
        &self.y
    }
}

impl OnlineRegulator for Dgr {
    fn input(&self) -> &Vector {
        &self.u
    }

    fn observe(&mut self, x_next: &Vector) -> Result<Vector> {
        let n = self.b.nrows();
        check_state(x_next, n)?;
        let y = x_next - &self.b * &self.u;
        let t = self.y.ncols();
        self.y = self.y.clone().insert_column(t, 0.0);
        self.y.set_column(t, &y);
        let xp = pinv(&self.x)?;
        let mut q = &self.y * &xp;
        // One refinement step; the exact correction is zero, but it removes
        // rounding left by the wide spread of column norms.
        let resid = &self.y - &q * &self.x;
        q += resid * &xp;
        self.k = &self.g * &q;
        self.q = Some(q);
        let c = self.x.ncols();
        self.x = self.x.clone().insert_column(c, 0.0);
        self.x.set_column(c, x_next);
        self.u = -(&self.k * x_next);
        Ok(self.u.clone())
    }

    fn gain(&self) -> &Matrix {
        &self.k
    }

    fn estimate(&self) -> Result<Matrix> {
        self.q.clone().ok_or(Error::InsufficientData)
    }

    fn steps(&self) -> usize {
        self.y.ncols()
    }
}

/// Recursive F-DGR state after the first two observations.
#[derive(Debug, Clone)]
pub struct FdgrState {
    alpha: f64,
    b: Matrix,
    g: Matrix,
    p: Matrix,
    q: Matrix,
    x_pinv: Matrix,
    k: Matrix,
    x: Vector,
    u: Vector,
    z: Vector,
    t: usize,
}

impl FdgrState {
    /// Initialization from `x_0` and the response `x_1 = A x_0` to `u_0 = 0`.
    pub fn new(b: &Matrix, alpha: f64, x0: &Vector, x1: &Vector) -> Result<Self> {
        check_input_matrix(b, x0)?;
        let n = b.nrows();
        check_state(x1, n)?;
        let nrm2 = x0.norm_squared();
        if nrm2 == 0.0 {
            return Err(Error::DegenerateStart);
        }
        let g = g_alpha(b, alpha)?;
        let p = x0 * x0.transpose() / nrm2;
        let q = x1 * x0.transpose() / nrm2;
        let k = &g * &q;
        let u = -(&k * x1);
        Ok(Self {
            alpha,
            b: b.clone(),
            g,
            p,
            q,
            x_pinv: Matrix::from_row_slice(1, n, (x0 / nrm2).as_slice()),
            k,
            x: x1.clone(),
            u,
            z: x0.clone(),
            t: 1,
        })
    }

    /// One update with the response `x_next` to the last emitted input.
    /// Returns the next input.
    pub fn step(&mut self, x_next: &Vector) -> Result<Vector> {
        check_state(x_next, self.b.nrows())?;
        let y = x_next - &self.b * &self.u;
        let append = pinv_append_column(&self.x_pinv, &self.p, &self.x)?;
        let z = append.z;
        if z.norm() > Z_THRESHOLD * self.x.norm().max(1.0) {
            let zp = vector_pinv(&z);
            self.q += (&y - &self.q * &self.x) * zp.transpose();
            self.p += &z * zp.transpose();
            self.z = z;
        } else {
            self.z = Vector::zeros(z.len());
        }
        self.x_pinv = append.pinv;
        self.k = &self.g * &self.q;
        self.x = x_next.clone();
        self.u = -(&self.k * x_next);
        self.t += 1;
        Ok(self.u.clone())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn g_alpha(&self) -> &Matrix {
        &self.g
    }

    /// Projector onto the span of `x_0, …, x_{t−1}`.
    pub fn projector(&self) -> &Matrix {
        &self.p
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    /// Incrementally maintained pseudoinverse of `[x_0, …, x_{t−1}]`.
    pub fn x_pinv(&self) -> &Matrix {
        &self.x_pinv
    }

    /// Hidden state of the most recent update (zero when it was in range).
    pub fn last_z(&self) -> &Vector {
        &self.z
    }

    pub fn t(&self) -> usize {
        self.t
    }
}

/// F-DGR including the warm-up step: emits `u_0 = 0`, builds the
/// [`FdgrState`] once `x_1` arrives, then runs the recursion.
#[derive(Debug, Clone)]
pub struct Fdgr {
    pending: Option<(Matrix, f64, Vector)>,
    state: Option<FdgrState>,
    zero_u: Vector,
    zero_k: Matrix,
}

impl Fdgr {
    pub fn new(b: &Matrix, alpha: f64, x0: &Vector) -> Result<Self> {
        check_input_matrix(b, x0)?;
        g_alpha(b, alpha)?;
        if x0.norm_squared() == 0.0 {
            return Err(Error::DegenerateStart);
        }
        let (n, m) = b.shape();
        Ok(Self {
            pending: Some((b.clone(), alpha, x0.clone())),
            state: None,
            zero_u: Vector::zeros(m),
            zero_k: Matrix::zeros(m, n),
        })
    }

    pub fn state(&self) -> Option<&FdgrState> {
        self.state.as_ref()
    }
}

impl OnlineRegulator for Fdgr {
    fn input(&self) -> &Vector {
        self.state.as_ref().map_or(&self.zero_u, |s| &s.u)
    }

    fn observe(&mut self, x_next: &Vector) -> Result<Vector> {
        match self.state.as_mut() {
            Some(s) => s.step(x_next),
            None => {
                let (b, alpha, x0) = self.pending.as_ref().expect("pending until first observation");
                let s = FdgrState::new(b, *alpha, x0, x_next)?;
                let u = s.u.clone();
                self.state = Some(s);
                self.pending = None;
                Ok(u)
            }
        }
    }

    fn gain(&self) -> &Matrix {
        self.state.as_ref().map_or(&self.zero_k, |s| &s.k)
    }

    fn estimate(&self) -> Result<Matrix> {
        self.state
            .as_ref()
            .map(|s| s.q.clone())
            .ok_or(Error::InsufficientData)
    }

    fn steps(&self) -> usize {
        self.state.as_ref().map_or(0, |s| s.t)
    }
}

/// `Â` from a regulator that has seen at least one step.
pub fn identify(reg: &dyn OnlineRegulator) -> Result<Matrix> {
    reg.estimate()
}
