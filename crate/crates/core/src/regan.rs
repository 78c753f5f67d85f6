//! Regularizability analysis: the orthogonal split `A = Ã + B̃` with
//! `Ã = Π_{R(B)⊥} A`, spectral and norm tests on `Ã`, PBH checks, Lyapunov
//! certificates, and verification of LMI witnesses (single system and
//! polytopic families).

use nalgebra::Complex;

use crate::error::{invalid, Error, Result};
use crate::numkernel::{
    complex_rank, ensure_finite, eigenvalues, operator_norm, range_projector,
    solve_discrete_lyapunov, spectral_radius, symmetric_eigenvalues, to_complex, CMatrix, Matrix,
};
use crate::sysmodel::LtiSystem;

/// Spectral radii within this distance of 1 count as not Schur stable.
pub const STABILITY_TOL: f64 = 1e-9;
/// Strict definiteness is checked as `λ_min > DEFINITENESS_MARGIN · ‖M‖`.
pub const DEFINITENESS_MARGIN: f64 = 1e-9;
/// Relative singular value threshold for PBH rank decisions.
pub const PBH_RANK_TOL: f64 = 1e-8;

pub fn atilde(sys: &LtiSystem) -> Result<Matrix> {
    let n = sys.state_dim();
    let p = range_projector(sys.b())?;
    Ok((Matrix::identity(n, n) - p) * sys.a())
}

pub fn btilde(sys: &LtiSystem) -> Result<Matrix> {
    Ok(range_projector(sys.b())? * sys.a())
}

/// `(ρ(Ã) < 1 − STABILITY_TOL, ρ(Ã))`.
pub fn is_regularizable(sys: &LtiSystem) -> Result<(bool, f64)> {
    let rho = spectral_radius(&atilde(sys)?)?;
    Ok((rho < 1.0 - STABILITY_TOL, rho))
}

/// `(‖Ã‖ < 1, ‖Ã‖)`. `‖Ã‖` is the smallest achievable `‖A − BK‖`, attained
/// at `K = B†A`.
pub fn is_contractible(sys: &LtiSystem) -> Result<(bool, f64)> {
    let nrm = operator_norm(&atilde(sys)?)?;
    Ok((nrm < 1.0, nrm))
}

fn shifted(a: &Matrix, lambda: Complex<f64>) -> CMatrix {
    let n = a.nrows();
    to_complex(a) - CMatrix::identity(n, n) * lambda
}

/// Rank of `[A − λI, B]`.
pub fn pbh_rank(a: &Matrix, b: &Matrix, lambda: Complex<f64>) -> Result<usize> {
    if !a.is_square() || b.nrows() != a.nrows() {
        return Err(invalid("PBH test needs square A and B with matching rows"));
    }
    let n = a.nrows();
    let m = b.ncols();
    let s = shifted(a, lambda);
    let cb = to_complex(b);
    let stacked = CMatrix::from_fn(n, n + m, |i, j| if j < n { s[(i, j)] } else { cb[(i, j - n)] });
    complex_rank(&stacked, PBH_RANK_TOL)
}

/// Rank of the stacked matrix `[A − λI; C]`.
pub fn pbh_observability_rank(a: &Matrix, c: &Matrix, lambda: Complex<f64>) -> Result<usize> {
    if !a.is_square() || c.ncols() != a.nrows() {
        return Err(invalid("PBH test needs square A and C with matching columns"));
    }
    let n = a.nrows();
    let p = c.nrows();
    let s = shifted(a, lambda);
    let cc = to_complex(c);
    let stacked = CMatrix::from_fn(n + p, n, |i, j| if i < n { s[(i, j)] } else { cc[(i - n, j)] });
    complex_rank(&stacked, PBH_RANK_TOL)
}

fn marginal_or_unstable(a: &Matrix) -> Result<Vec<Complex<f64>>> {
    Ok(eigenvalues(a)?
        .into_iter()
        .filter(|l| l.norm() >= 1.0 - STABILITY_TOL)
        .collect())
}

pub fn pbh_stabilizable(a: &Matrix, b: &Matrix) -> Result<bool> {
    ensure_finite(a, "A")?;
    let n = a.nrows();
    for l in marginal_or_unstable(a)? {
        if pbh_rank(a, b, l)? < n {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn pbh_detectable(a: &Matrix, c: &Matrix) -> Result<bool> {
    ensure_finite(a, "A")?;
    let n = a.nrows();
    for l in marginal_or_unstable(a)? {
        if pbh_observability_rank(a, c, l)? < n {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone)]
pub struct RegularizabilityReport {
    pub rho_a: f64,
    pub rho_atilde: f64,
    pub regularizable: bool,
    /// `ρ(Ã)` within `STABILITY_TOL` of 1.
    pub marginal: bool,
    pub contractible: bool,
    pub atilde_norm: f64,
    pub stabilizable: bool,
    /// Detectability of `(A, Bᵀ)`.
    pub detectable_transpose: bool,
    pub lyapunov_p: Option<Matrix>,
}

pub fn analyze(sys: &LtiSystem) -> Result<RegularizabilityReport> {
    let rho_a = spectral_radius(sys.a())?;
    let (regularizable, rho_atilde) = is_regularizable(sys)?;
    let (contractible, atilde_norm) = is_contractible(sys)?;
    let lyapunov_p = match lyapunov_certificate(sys)? {
        Certificate::Feasible(w) => w.p,
        Certificate::Infeasible { .. } => None,
    };
    Ok(RegularizabilityReport {
        rho_a,
        rho_atilde,
        regularizable,
        marginal: (rho_atilde - 1.0).abs() <= STABILITY_TOL,
        contractible,
        atilde_norm,
        stabilizable: pbh_stabilizable(sys.a(), sys.b())?,
        detectable_transpose: pbh_detectable(sys.a(), &sys.b().transpose())?,
        lyapunov_p,
    })
}

/// The LMI characterizations a witness can certify.
///
/// * `Iv`:  `P ≻ 0`, `ÃᵀPÃ − P ≺ 0`
/// * `V`:   `W ≻ 0`, `[W, ÃW; WÃᵀ, W] ≻ 0`
/// * `Vi`:  `P ≻ 0`, `[P, ÃᵀGᵀ; GÃ, G + Gᵀ − P] ≻ 0`
/// * `Vii`: `P ≻ 0`, `[GA + AᵀGᵀ − P, AᵀHᵀ − G; HA − Gᵀ, Π⊥PΠ⊥ − H − Hᵀ] ≺ 0`
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmiKind {
    Iv,
    V,
    Vi,
    Vii,
}

#[derive(Debug, Clone)]
pub struct LmiWitness {
    pub kind: LmiKind,
    pub p: Option<Matrix>,
    pub w: Option<Matrix>,
    pub g: Option<Matrix>,
    pub h: Option<Matrix>,
}

impl LmiWitness {
    pub fn lyapunov(p: Matrix) -> Self {
        Self {
            kind: LmiKind::Iv,
            p: Some(p),
            w: None,
            g: None,
            h: None,
        }
    }

    pub fn block(w: Matrix) -> Self {
        Self {
            kind: LmiKind::V,
            p: None,
            w: Some(w),
            g: None,
            h: None,
        }
    }

    pub fn slack(p: Matrix, g: Matrix) -> Self {
        Self {
            kind: LmiKind::Vi,
            p: Some(p),
            w: None,
            g: Some(g),
            h: None,
        }
    }

    pub fn extended(p: Matrix, g: Matrix, h: Matrix) -> Self {
        Self {
            kind: LmiKind::Vii,
            p: Some(p),
            w: None,
            g: Some(g),
            h: Some(h),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Certificate {
    Feasible(LmiWitness),
    Infeasible { rho_atilde: f64 },
}

/// Kind-(iv) witness `P` solving `ÃᵀPÃ − P = −I`, or `Infeasible` when
/// `(A, B)` is not regularizable.
pub fn lyapunov_certificate(sys: &LtiSystem) -> Result<Certificate> {
    let at = atilde(sys)?;
    let rho = spectral_radius(&at)?;
    if rho >= 1.0 - STABILITY_TOL {
        return Ok(Certificate::Infeasible { rho_atilde: rho });
    }
    match solve_discrete_lyapunov(&at) {
        Ok(p) => Ok(Certificate::Feasible(LmiWitness::lyapunov(p))),
        Err(Error::NotSchurStable { rho }) => Ok(Certificate::Infeasible { rho_atilde: rho }),
        Err(e) => Err(e),
    }
}

/// Kind-(v) witness `W = P⁻¹` derived from a kind-(iv) `P`.
pub fn block_witness_from(p: &Matrix) -> Result<LmiWitness> {
    let w = p
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidWitness("P is singular".into()))?;
    Ok(LmiWitness::block(crate::numkernel::symmetrize(&w)))
}

/// Kind-(vi) witness with `G = P`. The (vi) block then reduces by a Schur
/// complement to `P − ÃᵀPÃ ≻ 0`, i.e. to the kind-(iv) condition.
pub fn slack_witness_from(p: &Matrix) -> LmiWitness {
    LmiWitness::slack(p.clone(), p.clone())
}

/// Kind-(vii) witness from a Lyapunov certificate `P` with
/// `ÃᵀPÃ − P = −I`: `H = Π⊥PΠ⊥/2 + εI`, `G = AᵀH` with
/// `ε = 1/(4(1 + ‖A‖²))`. The off-diagonal blocks vanish and the diagonal
/// blocks become `Aᵀ(Π⊥PΠ⊥ + 2εI)A − P = −I + 2εAᵀA` and `−2εI`.
pub fn extended_witness_from(sys: &LtiSystem, p: &Matrix) -> Result<LmiWitness> {
    let n = sys.state_dim();
    let perp = Matrix::identity(n, n) - range_projector(sys.b())?;
    let a_norm = operator_norm(sys.a())?;
    let eps = 0.25 / (1.0 + a_norm * a_norm);
    let h = (&perp * p * &perp) * 0.5 + Matrix::identity(n, n) * eps;
    let g = sys.a().transpose() * &h;
    Ok(LmiWitness::extended(p.clone(), g, h))
}

fn spectral_extent(vals: &[f64]) -> f64 {
    vals.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn is_positive_definite(m: &Matrix) -> Result<bool> {
    let vals = symmetric_eigenvalues(m)?;
    let scale = spectral_extent(&vals);
    Ok(scale > 0.0 && vals[0] > DEFINITENESS_MARGIN * scale)
}

pub fn is_negative_definite(m: &Matrix) -> Result<bool> {
    is_positive_definite(&(-m))
}

pub fn is_positive_semidefinite(m: &Matrix) -> Result<bool> {
    let vals = symmetric_eigenvalues(m)?;
    let scale = spectral_extent(&vals);
    Ok(vals[0] >= -DEFINITENESS_MARGIN * scale)
}

fn block2(a11: &Matrix, a12: &Matrix, a21: &Matrix, a22: &Matrix) -> Matrix {
    let n = a11.nrows();
    let k = a22.nrows();
    let mut out = Matrix::zeros(n + k, n + k);
    out.view_mut((0, 0), (n, n)).copy_from(a11);
    out.view_mut((0, n), (n, k)).copy_from(a12);
    out.view_mut((n, 0), (k, n)).copy_from(a21);
    out.view_mut((n, n), (k, k)).copy_from(a22);
    out
}

fn require<'a>(m: &'a Option<Matrix>, name: &str, n: usize) -> Result<&'a Matrix> {
    let m = m
        .as_ref()
        .ok_or_else(|| Error::InvalidWitness(format!("missing {name}")))?;
    if m.shape() != (n, n) {
        return Err(Error::InvalidWitness(format!(
            "{name} must be {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    ensure_finite(m, name).map_err(|_| Error::InvalidWitness(format!("{name} not finite")))?;
    Ok(m)
}

fn require_symmetric<'a>(m: &'a Option<Matrix>, name: &str, n: usize) -> Result<&'a Matrix> {
    let m = require(m, name, n)?;
    let asym = (m - m.transpose()).amax();
    if asym > 1e-10 * m.amax().max(1.0) {
        return Err(Error::InvalidWitness(format!("{name} is not symmetric")));
    }
    Ok(m)
}

/// Assembles the block matrix for the witness kind and checks its
/// definiteness.
pub fn verify_lmi_witness(sys: &LtiSystem, w: &LmiWitness) -> Result<bool> {
    let n = sys.state_dim();
    let a = sys.a();
    let at = atilde(sys)?;
    match w.kind {
        LmiKind::Iv => {
            let p = require_symmetric(&w.p, "P", n)?;
            Ok(is_positive_definite(p)? && is_negative_definite(&(at.transpose() * p * &at - p))?)
        }
        LmiKind::V => {
            let wm = require_symmetric(&w.w, "W", n)?;
            let off = &at * wm;
            let blk = block2(wm, &off, &off.transpose(), wm);
            Ok(is_positive_definite(wm)? && is_positive_definite(&blk)?)
        }
        LmiKind::Vi => {
            let p = require_symmetric(&w.p, "P", n)?;
            let g = require(&w.g, "G", n)?;
            let lower = g * &at;
            let blk = block2(p, &lower.transpose(), &lower, &(g + g.transpose() - p));
            Ok(is_positive_definite(p)? && is_positive_definite(&blk)?)
        }
        LmiKind::Vii => {
            let p = require_symmetric(&w.p, "P", n)?;
            let g = require(&w.g, "G", n)?;
            let h = require(&w.h, "H", n)?;
            let perp = Matrix::identity(n, n) - range_projector(sys.b())?;
            let blk = extended_block(a, p, g, h, &(&perp * p * &perp));
            Ok(is_positive_definite(p)? && is_negative_definite(&blk)?)
        }
    }
}

fn extended_block(a: &Matrix, p: &Matrix, g: &Matrix, h: &Matrix, lower_right: &Matrix) -> Matrix {
    let a11 = g * a + a.transpose() * g.transpose() - p;
    let a12 = a.transpose() * h.transpose() - g;
    let a21 = h * a - g.transpose();
    let a22 = lower_right - h - h.transpose();
    block2(&a11, &a12, &a21, &a22)
}

/// Sufficient condition for every `A_α ∈ convhull{A_i}` to be regularizable
/// with input matrix `B`: for each vertex the extended LMI with `Π_S` in the
/// lower-right block is negative definite, `P_i ≻ 0`, and the coupling
/// matrix `[P_i, P_iΠ⊥; Π⊥P_i, Π_S P_i Π_S]` is positive semidefinite.
///
/// `s_basis` spans `S`; its columns need not be orthonormal, and a zero
/// matrix stands for `S = {0}`.
pub fn verify_polytopic(
    vertices: &[Matrix],
    b: &Matrix,
    s_basis: &Matrix,
    p_list: &[Matrix],
    g: &Matrix,
    h: &Matrix,
) -> Result<bool> {
    if vertices.is_empty() {
        return Err(invalid("at least one vertex is required"));
    }
    if vertices.len() != p_list.len() {
        return Err(invalid(format!(
            "{} vertices but {} P matrices",
            vertices.len(),
            p_list.len()
        )));
    }
    let n = vertices[0].nrows();
    let square = |m: &Matrix| m.shape() == (n, n);
    if !vertices.iter().all(square)
        || !p_list.iter().all(square)
        || !square(g)
        || !square(h)
        || b.nrows() != n
        || s_basis.nrows() != n
    {
        return Err(invalid("polytopic data must share state dimension"));
    }
    let pi_s = range_projector(s_basis)?;
    let perp = Matrix::identity(n, n) - range_projector(b)?;
    for (a, p) in vertices.iter().zip(p_list) {
        ensure_finite(a, "vertex")?;
        if !is_positive_definite(p)? {
            return Ok(false);
        }
        let blk = extended_block(a, p, g, h, &(&pi_s * p * &pi_s));
        if !is_negative_definite(&blk)? {
            return Ok(false);
        }
        let pp = p * &perp;
        let coupling = block2(p, &pp, &pp.transpose(), &(&pi_s * p * &pi_s));
        if !is_positive_semidefinite(&coupling)? {
            return Ok(false);
        }
    }
    Ok(true)
}
