//! The plant `x_{t+1} = A x_t + B u_t + ω_t`, its seeded perturbation and
//! noise, and eigenstructure diagnostics.

use nalgebra::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::numkernel::{
    ensure_finite, ensure_finite_vec, range_projector, spectral_radius, CMatrix, Matrix, Vector,
};

/// Generator used for every random draw in the crate.
pub type SimRng = ChaCha8Rng;

pub const DEFAULT_MODE_TOL: f64 = 1e-8;
/// Eigenvector matrices with a larger condition number are treated as defective.
pub const EIGENVECTOR_CONDITION_CAP: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: Matrix,
    b: Matrix,
    noise_std: f64,
}

impl LtiSystem {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        ensure_finite(&a, "A")?;
        if !a.is_square() {
            return Err(invalid(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() {
            return Err(invalid(format!(
                "B has {} rows but A is {}x{}",
                b.nrows(),
                a.nrows(),
                a.ncols()
            )));
        }
        ensure_finite(&b, "B")?;
        Ok(Self {
            a,
            b,
            noise_std: 0.0,
        })
    }

    pub fn with_noise(mut self, noise_std: f64) -> Result<Self> {
        if !noise_std.is_finite() || noise_std < 0.0 {
            return Err(invalid(format!("noise_std must be >= 0, got {noise_std}")));
        }
        self.noise_std = noise_std;
        Ok(self)
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Advances the plant one step. Process noise is drawn from `rng` when
    /// `noise_std > 0`; passing `None` gives the noiseless update.
    pub fn step(&self, x: &Vector, u: &Vector, rng: Option<&mut SimRng>) -> Result<Vector> {
        if x.len() != self.state_dim() || u.len() != self.input_dim() {
            return Err(invalid(format!(
                "step expects x in R^{} and u in R^{}, got {} and {}",
                self.state_dim(),
                self.input_dim(),
                x.len(),
                u.len()
            )));
        }
        let mut next = &self.a * x + &self.b * u;
        if self.noise_std > 0.0 {
            if let Some(rng) = rng {
                let normal = Normal::new(0.0, self.noise_std).expect("validated std");
                next.iter_mut().for_each(|v| *v += normal.sample(rng));
            }
        }
        Ok(next)
    }

    /// Copy with `A` replaced by `A + ΔA`, entries of `ΔA` i.i.d. `N(0, std²)`.
    pub fn perturb(&self, std: f64, seed: u64) -> Result<Self> {
        if !std.is_finite() || std < 0.0 {
            return Err(invalid(format!("perturbation std must be >= 0, got {std}")));
        }
        if std == 0.0 {
            return Ok(self.clone());
        }
        let mut rng = SimRng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).expect("validated std");
        let n = self.state_dim();
        let delta = Matrix::from_fn(n, n, |_, _| normal.sample(&mut rng));
        Ok(Self {
            a: &self.a + delta,
            b: self.b.clone(),
            noise_std: self.noise_std,
        })
    }

    /// Expresses `x0` in a canonical eigenbasis of `A` and reports which
    /// modes it excites and where those modes sit relative to `R(B)`.
    pub fn mode_excitation(&self, x0: &Vector, tol: f64) -> Result<ExcitationReport> {
        if x0.len() != self.state_dim() {
            return Err(invalid("x0 dimension does not match A"));
        }
        ensure_finite_vec(x0, "x0")?;
        if tol.is_nan() || tol <= 0.0 {
            return Err(invalid("tolerance must be positive"));
        }
        let basis = eigenbasis(&self.a, tol)?;
        let n = self.state_dim();
        let v = &basis.vectors;

        let cond = condition_number(v)?;
        if cond > EIGENVECTOR_CONDITION_CAP {
            return Err(Error::DefectiveMatrix { condition: cond });
        }
        let rhs = CMatrix::from_fn(n, 1, |i, _| Complex::new(x0[i], 0.0));
        let coeffs = v
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or(Error::DefectiveMatrix {
                condition: f64::INFINITY,
            })?;
        let x_norm = x0.norm();
        let coefficients: Vec<f64> = coeffs.iter().map(|c| c.norm()).collect();
        let excited: Vec<bool> = coefficients.iter().map(|&c| c > tol * x_norm).collect();

        let mut clusters_hit: Vec<usize> = excited
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(|(i, _)| basis.cluster[i])
            .collect();
        clusters_hit.sort_unstable();
        clusters_hit.dedup();

        let proj = range_projector(&self.b)?;
        let mut in_range_b = 0;
        let mut in_complement_b = 0;
        let mut placement = Vec::with_capacity(n);
        for i in 0..n {
            let col = v.column(i);
            let re = Vector::from_iterator(n, col.iter().map(|c| c.re));
            let im = Vector::from_iterator(n, col.iter().map(|c| c.im));
            let in_b = ((&re - &proj * &re).norm_squared() + (&im - &proj * &im).norm_squared())
                .sqrt();
            let in_perp = ((&proj * &re).norm_squared() + (&proj * &im).norm_squared()).sqrt();
            let place = if in_b <= tol {
                ModePlacement::InRangeB
            } else if in_perp <= tol {
                ModePlacement::InComplementB
            } else {
                ModePlacement::Straddling
            };
            if excited[i] {
                match place {
                    ModePlacement::InRangeB => in_range_b += 1,
                    ModePlacement::InComplementB => in_complement_b += 1,
                    ModePlacement::Straddling => {}
                }
            }
            placement.push(place);
        }

        Ok(ExcitationReport {
            excited_count: excited.iter().filter(|&&e| e).count(),
            distinct_eigenvalue_count: clusters_hit.len(),
            in_range_b,
            in_complement_b,
            coefficients,
            eigenvalues: basis.values,
            excited,
            placement,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModePlacement {
    InRangeB,
    InComplementB,
    /// Has non-negligible components in both `R(B)` and its complement.
    Straddling,
}

/// Which eigenmodes an initial state excites.
#[derive(Debug, Clone)]
pub struct ExcitationReport {
    /// `k`: modes with coefficient above `tol·‖x0‖`.
    pub excited_count: usize,
    /// `r`: distinct eigenvalues among the excited modes.
    pub distinct_eigenvalue_count: usize,
    /// `k1`: excited modes inside `R(B)`.
    pub in_range_b: usize,
    /// `k2`: excited modes inside `R(B)⊥`.
    pub in_complement_b: usize,
    pub coefficients: Vec<f64>,
    pub eigenvalues: Vec<Complex<f64>>,
    pub excited: Vec<bool>,
    pub placement: Vec<ModePlacement>,
}

struct Eigenbasis {
    values: Vec<Complex<f64>>,
    vectors: CMatrix,
    cluster: Vec<usize>,
}

fn condition_number(v: &CMatrix) -> Result<f64> {
    let (sv, _) = crate::numkernel::complex_svd(v, false)?;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(if smin == 0.0 { f64::INFINITY } else { smax / smin })
}

/// Groups eigenvalues closer than `tol·max(1, ρ)` and returns, per group, a
/// basis of the eigenspace in reduced column-echelon form (identity on the
/// first well-conditioned pivot rows), each vector scaled to unit norm.
fn eigenbasis(a: &Matrix, tol: f64) -> Result<Eigenbasis> {
    let n = a.nrows();
    let eigs = crate::numkernel::eigenvalues(a)?;
    let rho = spectral_radius(a)?;
    let gap = tol * rho.max(1.0);

    let mut cluster = vec![usize::MAX; n];
    let mut n_clusters = 0;
    for i in 0..n {
        if cluster[i] != usize::MAX {
            continue;
        }
        cluster[i] = n_clusters;
        let mut stack = vec![i];
        while let Some(j) = stack.pop() {
            for k in 0..n {
                if cluster[k] == usize::MAX && (eigs[j] - eigs[k]).norm() <= gap {
                    cluster[k] = n_clusters;
                    stack.push(k);
                }
            }
        }
        n_clusters += 1;
    }

    let a_norm = crate::numkernel::operator_norm(a)?.max(1.0);
    let ca = crate::numkernel::to_complex(a);
    let mut values = Vec::with_capacity(n);
    let mut vectors = CMatrix::zeros(n, n);
    let mut assigned = Vec::with_capacity(n);
    let mut col = 0;
    for c in 0..n_clusters {
        let members: Vec<usize> = (0..n).filter(|&i| cluster[i] == c).collect();
        let g = members.len();
        let center = members.iter().map(|&i| eigs[i]).sum::<Complex<f64>>() / g as f64;
        let shifted = &ca - CMatrix::identity(n, n) * center;
        let (sv, v) = crate::numkernel::complex_svd(&shifted, true)?;
        let v = v.expect("requested");
        // smallest g singular directions span the eigenspace
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
        let null_idx = &order[..g];
        if sv[null_idx[g - 1]] > 1e-6 * a_norm {
            return Err(Error::DefectiveMatrix {
                condition: f64::INFINITY,
            });
        }
        let mut basis = CMatrix::from_fn(n, g, |r, j| v[(r, null_idx[j])]);
        canonicalize_columns(&mut basis);
        for j in 0..g {
            let v = basis.column(j).into_owned();
            let nv = v.norm();
            vectors.set_column(col, &(v / Complex::new(nv, 0.0)));
            values.push(eigs[members[j]]);
            assigned.push(c);
            col += 1;
        }
    }
    Ok(Eigenbasis {
        values,
        vectors,
        cluster: assigned,
    })
}

/// Rewrites the columns of `basis` so that the submatrix on the chosen pivot
/// rows is the identity. Pivots are the first rows whose entry exceeds
/// `1e-8` of the column's largest magnitude after elimination.
fn canonicalize_columns(basis: &mut CMatrix) {
    let (n, g) = basis.shape();
    let mut work = basis.clone();
    let mut pivots = Vec::with_capacity(g);
    for j in 0..g {
        let colmax = (0..n).map(|r| work[(r, j)].norm()).fold(0.0, f64::max);
        let Some(p) = (0..n).find(|&r| !pivots.contains(&r) && work[(r, j)].norm() > 1e-8 * colmax)
        else {
            return;
        };
        pivots.push(p);
        let pv = work[(p, j)];
        for k in (j + 1)..g {
            let f = work[(p, k)] / pv;
            for r in 0..n {
                let sub = work[(r, j)] * f;
                work[(r, k)] -= sub;
            }
        }
    }
    let sub = CMatrix::from_fn(g, g, |i, j| basis[(pivots[i], j)]);
    if let Some(inv) = sub.try_inverse() {
        *basis = &*basis * inv;
    }
}

/// `k × t` matrix whose row `ℓ` is `(1, λ_ℓ, …, λ_ℓ^{t−1})`.
pub fn vandermonde(eigenvalues: &[Complex<f64>], t: usize) -> Result<CMatrix> {
    if t == 0 {
        return Err(invalid("Vandermonde order must be at least 1"));
    }
    Ok(CMatrix::from_fn(eigenvalues.len(), t, |l, j| {
        eigenvalues[l].powu(j as u32)
    }))
}

/// Upper bidiagonal matrix with the given diagonal and a constant
/// superdiagonal. With `superdiag = 1` and `B = e_n` this is the classic
/// controllable chain whose first state cannot be influenced for `n − 1`
/// steps.
pub fn chain_matrix(diag: &[f64], superdiag: f64) -> Matrix {
    let n = diag.len();
    Matrix::from_fn(n, n, |i, j| {
        if i == j {
            diag[i]
        } else if j == i + 1 {
            superdiag
        } else {
            0.0
        }
    })
}

/// `e_i` in `R^n` as a one-column matrix.
pub fn unit_column(n: usize, i: usize) -> Matrix {
    Matrix::from_fn(n, 1, |r, _| if r == i { 1.0 } else { 0.0 })
}

pub fn unit_vector(n: usize, i: usize) -> Vector {
    Vector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 })
}
