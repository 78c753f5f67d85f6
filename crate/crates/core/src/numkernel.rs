//! Dense real matrix kernels: SVD-based pseudoinverses and projectors,
//! spectra, the rank-one pseudoinverse column update, and the discrete
//! Lyapunov and Riccati solvers used by the certification and baseline
//! controller code.
//!
//! Everything here is a pure function of its arguments.

use faer::{c64, Mat};
use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{invalid, Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type CMatrix = DMatrix<Complex<f64>>;

/// Relative threshold below which the appended column counts as lying in the
/// range of the existing data.
pub const Z_THRESHOLD: f64 = 1e-10;

const LYAPUNOV_STABILITY_MARGIN: f64 = 1e-9;
const DARE_MAX_ITERATIONS: usize = 10_000;
const DARE_RELATIVE_TOLERANCE: f64 = 1e-10;

/// Thin singular value decomposition with singular values sorted
/// non-increasing.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
    pub numerical_rank: usize,
}

impl SvdFactors {
    pub fn rank_tolerance(&self) -> f64 {
        rank_tolerance(
            self.singular_values.first().copied().unwrap_or(0.0),
            self.u.nrows(),
            self.v.nrows(),
        )
    }
}

/// `σ₁ · max(rows, cols) · ε`.
pub fn rank_tolerance(sigma_max: f64, rows: usize, cols: usize) -> f64 {
    sigma_max * rows.max(cols) as f64 * f64::EPSILON
}

pub(crate) fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(invalid(format!("{what} has an empty dimension")));
    }
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(format!("{what} has non-finite entries")))
    }
}

pub(crate) fn ensure_finite_vec(v: &Vector, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(invalid(format!("{what} has non-finite entries")))
    }
}

fn to_faer(m: &Matrix) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn to_faer_complex(m: &CMatrix) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)].re, m[(i, j)].im))
}

/// Thin SVD. Non-square inputs are first reduced by a Householder QR of the
/// tall orientation, which keeps the small singular vectors accurate when the
/// columns differ in scale by many orders of magnitude.
pub fn svd(m: &Matrix) -> Result<SvdFactors> {
    ensure_finite(m, "matrix")?;
    let (r, c) = m.shape();
    let (u, singular_values, v) = if r > c {
        let qr = m.clone().qr();
        let (uq, s, vq) = square_svd(&qr.r())?;
        (qr.q() * uq, s, vq)
    } else if r < c {
        let qr = m.transpose().qr();
        let (uq, s, vq) = square_svd(&qr.r().transpose())?;
        (uq, s, qr.q() * vq)
    } else {
        square_svd(m)?
    };
    let tol = rank_tolerance(singular_values.first().copied().unwrap_or(0.0), r, c);
    let numerical_rank = singular_values.iter().filter(|&&s| s > tol).count();
    Ok(SvdFactors {
        u,
        singular_values,
        v,
        numerical_rank,
    })
}

fn square_svd(m: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let dec = to_faer(m)
        .thin_svd()
        .map_err(|_| Error::NoConvergence("SVD"))?;
    let (r, c) = m.shape();
    let k = r.min(c);
    let (fu, fs, fv) = (dec.U(), dec.S(), dec.V());
    Ok((
        Matrix::from_fn(r, k, |i, j| fu[(i, j)]),
        (0..k).map(|i| fs[i]).collect(),
        Matrix::from_fn(c, k, |i, j| fv[(i, j)]),
    ))
}

/// Singular values, non-increasing.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    ensure_finite(m, "matrix")?;
    let s = to_faer(m)
        .singular_values()
        .map_err(|_| Error::NoConvergence("SVD"))?;
    Ok(s)
}

/// Singular values of a complex matrix, non-increasing, and optionally the
/// right singular vectors in the matching column order.
pub(crate) fn complex_svd(m: &CMatrix, vectors: bool) -> Result<(Vec<f64>, Option<CMatrix>)> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(invalid("complex matrix has non-finite entries"));
    }
    let fm = to_faer_complex(m);
    if !vectors {
        let s = fm
            .singular_values()
            .map_err(|_| Error::NoConvergence("complex SVD"))?;
        return Ok((s, None));
    }
    let dec = fm.svd().map_err(|_| Error::NoConvergence("complex SVD"))?;
    let (fs, fv) = (dec.S(), dec.V());
    let k = m.nrows().min(m.ncols());
    let s = (0..k).map(|i| fs[i].re).collect();
    let c = m.ncols();
    let v = CMatrix::from_fn(c, c, |i, j| Complex::new(fv[(i, j)].re, fv[(i, j)].im));
    Ok((s, Some(v)))
}

/// Eigen-decomposition of the symmetric part: eigenvalues ascending and the
/// matching orthonormal eigenvectors.
pub(crate) fn symmetric_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    ensure_finite(m, "matrix")?;
    if !m.is_square() {
        return Err(invalid("symmetric eigenvalues need a square matrix"));
    }
    let dec = to_faer(&symmetrize(m))
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| Error::NoConvergence("symmetric eigensolver"))?;
    let (fs, fu) = (dec.S(), dec.U());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| fs[a].total_cmp(&fs[b]));
    let vals = order.iter().map(|&k| fs[k]).collect();
    let vecs = Matrix::from_fn(n, n, |i, j| fu[(i, order[j])]);
    Ok((vals, vecs))
}

pub fn numerical_rank(m: &Matrix) -> Result<usize> {
    let sv = singular_values(m)?;
    let tol = rank_tolerance(sv.first().copied().unwrap_or(0.0), m.nrows(), m.ncols());
    Ok(sv.iter().filter(|&&s| s > tol).count())
}

/// Moore-Penrose pseudoinverse; singular values at or below the rank
/// tolerance are treated as zero.
pub fn pinv(m: &Matrix) -> Result<Matrix> {
    let f = svd(m)?;
    let k = f.numerical_rank;
    let mut out = Matrix::zeros(m.ncols(), m.nrows());
    for i in 0..k {
        let s = f.singular_values[i];
        out += (f.v.column(i) / s) * f.u.column(i).transpose();
    }
    Ok(out)
}

/// Orthogonal projector onto the column space, `U_r U_rᵀ`.
pub fn range_projector(m: &Matrix) -> Result<Matrix> {
    let f = svd(m)?;
    let ur = f.u.columns(0, f.numerical_rank);
    Ok(ur * ur.transpose())
}

/// `I − Π_{R(M)}`.
pub fn complement_projector(m: &Matrix) -> Result<Matrix> {
    let p = range_projector(m)?;
    Ok(Matrix::identity(m.nrows(), m.nrows()) - p)
}

pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex<f64>>> {
    ensure_finite(m, "matrix")?;
    if !m.is_square() {
        return Err(invalid(format!(
            "eigenvalues need a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let vals = to_faer(m)
        .eigenvalues()
        .map_err(|_| Error::NoConvergence("eigenvalues"))?;
    Ok(vals.iter().map(|z| Complex::new(z.re, z.im)).collect())
}

pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max))
}

/// Largest singular value.
pub fn operator_norm(m: &Matrix) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// Pseudoinverse of a single column: `zᵀ/‖z‖²`, or the zero row for `z = 0`.
pub fn vector_pinv(z: &Vector) -> Vector {
    let nrm2 = z.norm_squared();
    if nrm2 > 0.0 {
        z / nrm2
    } else {
        Vector::zeros(z.len())
    }
}

/// Result of appending one column to a data matrix whose pseudoinverse and
/// range projector are already known.
#[derive(Debug, Clone)]
pub struct ColumnAppend {
    /// Pseudoinverse of the widened matrix, `(t+1) × n`.
    pub pinv: Matrix,
    /// Component of the new column orthogonal to the previous range.
    pub z: Vector,
    pub in_range: bool,
}

/// Rank-one update of `X†` when `X` gains the column `x_new`.
///
/// With `γ = X† x_new` and `z = (I − P) x_new`, the informative branch gives
/// `[X† − γ z†; z†]`. When `z` is numerically zero the in-range branch gives
/// `[X† − ε γ ζᵀ; ε ζᵀ]` with `ε = 1/(‖γ‖² + 1)` and `ζ = (X†)ᵀ γ`.
pub fn pinv_append_column(
    x_prev_pinv: &Matrix,
    p_prev: &Matrix,
    x_new: &Vector,
) -> Result<ColumnAppend> {
    let n = x_new.len();
    if x_prev_pinv.ncols() != n || p_prev.nrows() != n || p_prev.ncols() != n {
        return Err(invalid(format!(
            "dimension mismatch: pinv is {}x{}, projector {}x{}, column has {} entries",
            x_prev_pinv.nrows(),
            x_prev_pinv.ncols(),
            p_prev.nrows(),
            p_prev.ncols(),
            n
        )));
    }
    ensure_finite_vec(x_new, "appended column")?;
    let t = x_prev_pinv.nrows();
    // Projecting twice keeps z orthogonal to the old range when it is small
    // relative to x_new.
    let z = x_new - p_prev * x_new;
    let z = &z - p_prev * &z;
    let gamma = x_prev_pinv * x_new;
    let in_range = z.norm() <= Z_THRESHOLD * x_new.norm().max(1.0);

    let mut out = Matrix::zeros(t + 1, n);
    if in_range {
        let eps = 1.0 / (gamma.norm_squared() + 1.0);
        let zeta = x_prev_pinv.transpose() * &gamma;
        let top = x_prev_pinv - (&gamma * zeta.transpose()) * eps;
        out.rows_mut(0, t).copy_from(&top);
        out.row_mut(t).copy_from(&(zeta.transpose() * eps));
    } else {
        let zp = vector_pinv(&z);
        let top = x_prev_pinv - &gamma * zp.transpose();
        out.rows_mut(0, t).copy_from(&top);
        out.row_mut(t).copy_from(&zp.transpose());
    }
    Ok(ColumnAppend {
        pinv: out,
        z,
        in_range,
    })
}

pub(crate) fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    Ok(symmetric_eigen(m)?.0)
}

pub fn min_symmetric_eigenvalue(m: &Matrix) -> Result<f64> {
    Ok(symmetric_eigenvalues(m)?[0])
}

/// Principal square root of a symmetric positive semidefinite matrix.
pub fn symmetric_sqrt(m: &Matrix) -> Result<Matrix> {
    let (vals, vecs) = symmetric_eigen(m)?;
    let root = Vector::from_iterator(vals.len(), vals.iter().map(|l| l.max(0.0).sqrt()));
    Ok(&vecs * Matrix::from_diagonal(&root) * vecs.transpose())
}

/// Solves `FᵀPF − P = −I` by the doubling iteration
/// `P ← P + AₖᵀPAₖ, Aₖ₊₁ = Aₖ²`.
pub fn solve_discrete_lyapunov(f: &Matrix) -> Result<Matrix> {
    ensure_finite(f, "F")?;
    if !f.is_square() {
        return Err(invalid("Lyapunov operator must be square"));
    }
    let rho = spectral_radius(f)?;
    if rho >= 1.0 - LYAPUNOV_STABILITY_MARGIN {
        return Err(Error::NotSchurStable { rho });
    }
    let n = f.nrows();
    let mut p = Matrix::identity(n, n);
    let mut ak = f.clone();
    for _ in 0..128 {
        let incr = ak.transpose() * &p * &ak;
        p += &incr;
        ak = &ak * &ak;
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::NoConvergence("Lyapunov doubling"));
        }
        if incr.norm() <= f64::EPSILON * p.norm() || ak.norm() == 0.0 {
            return Ok(symmetrize(&p));
        }
    }
    Err(Error::NoConvergence("Lyapunov doubling"))
}

/// Stabilizing solution of the discrete algebraic Riccati equation and the
/// matching state-feedback gain.
#[derive(Debug, Clone)]
pub struct DareSolution {
    pub p: Matrix,
    pub k: Matrix,
    pub iterations: usize,
}

fn spd_solve(s: &Matrix, rhs: &Matrix) -> Option<Matrix> {
    if let Some(ch) = s.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    s.clone().lu().solve(rhs)
}

/// Fixed-point iteration of the Riccati map
/// `P ← Q + AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA`, started at `P = Q`.
pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<DareSolution> {
    ensure_finite(a, "A")?;
    ensure_finite(b, "B")?;
    ensure_finite(q, "Q")?;
    ensure_finite(r, "R")?;
    let n = a.nrows();
    let m = b.ncols();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(invalid(format!(
            "DARE dimensions inconsistent: A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    let at = a.transpose();
    let bt = b.transpose();
    let mut p = symmetrize(q);
    for it in 1..=DARE_MAX_ITERATIONS {
        let s = r + &bt * &p * b;
        let k = spd_solve(&s, &(&bt * &p * a)).ok_or(Error::DareDiverged { iterations: it })?;
        let next = symmetrize(&(q + &at * &p * a - &at * &p * b * &k));
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::DareDiverged { iterations: it });
        }
        let diff = (&next - &p).norm();
        p = next;
        if diff <= DARE_RELATIVE_TOLERANCE * p.norm() {
            let s = r + &bt * &p * b;
            let k = spd_solve(&s, &(&bt * &p * a))
                .ok_or(Error::DareDiverged { iterations: it })?;
            if spectral_radius(&(a - b * &k))? >= 1.0 {
                return Err(Error::DareDiverged { iterations: it });
            }
            return Ok(DareSolution {
                p,
                k,
                iterations: it,
            });
        }
    }
    Err(Error::DareDiverged {
        iterations: DARE_MAX_ITERATIONS,
    })
}

/// Numerical rank of a complex matrix with a caller-chosen relative
/// threshold on `σᵢ / σ₁`.
pub fn complex_rank(m: &CMatrix, relative_tol: f64) -> Result<usize> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0);
    }
    let (sv, _) = complex_svd(m, false)?;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > relative_tol * smax).count())
}

pub(crate) fn to_complex(m: &Matrix) -> CMatrix {
    m.map(|v| Complex::new(v, 0.0))
}
