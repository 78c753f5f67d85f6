#![allow(dead_code)]

use dgrkit::numkernel::{spectral_radius, Matrix, Vector};
use dgrkit::regulator::OnlineRegulator;
use dgrkit::sysmodel::{LtiSystem, SimRng};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut SimRng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_vec(n: usize, rng: &mut SimRng) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Orthonormal basis `[U, V]` of `ℝⁿ` with `R(U) = R(b)`.
pub fn split_basis(b: &Matrix, rng: &mut SimRng) -> (Matrix, Matrix) {
    let (n, m) = b.shape();
    let mut full = gaussian(n, n, rng);
    full.columns_mut(0, m).copy_from(b);
    let q = full.qr().q();
    (q.columns(0, m).into_owned(), q.columns(m, n - m).into_owned())
}

/// Random pair with `ρ(Ã) = rho_tilde`. `reach_scale` scales the part of
/// `A` inside `R(B)`, which is unconstrained.
pub fn regularizable_system(
    n: usize,
    m: usize,
    rho_tilde: f64,
    reach_scale: f64,
    rng: &mut SimRng,
) -> LtiSystem {
    let b = gaussian(n, m, rng);
    let (u, v) = split_basis(&b, rng);
    let d = gaussian(m, n, rng) * reach_scale;
    let mut a = &u * d;
    if m < n {
        let s = gaussian(n - m, n - m, rng);
        let rho = spectral_radius(&s).unwrap().max(1e-12);
        let s = s * (rho_tilde / rho);
        let r = gaussian(n - m, m, rng);
        let c = s * v.transpose() + r * u.transpose();
        a += &v * c;
    }
    LtiSystem::new(a, b).unwrap()
}

/// `n` distinct real eigenvalues with magnitudes in `[lo, hi]` and
/// pairwise gaps of at least `gap`.
pub fn distinct_spectrum(n: usize, lo: f64, hi: f64, gap: f64, rng: &mut SimRng) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(n);
    while out.len() < n {
        let mag = rng.random_range(lo..hi);
        let v = if rng.random_bool(0.5) { mag } else { -mag };
        if out.iter().all(|w| (w - v).abs() >= gap) {
            out.push(v);
        }
    }
    out
}

/// `V diag(eigs) V⁻¹`.
pub fn from_eigenpairs(eigs: &[f64], v: &Matrix) -> Matrix {
    let d = Matrix::from_diagonal(&Vector::from_column_slice(eigs));
    v * d * v.clone().try_inverse().expect("eigenvector matrix invertible")
}

/// Well-conditioned random eigenvector matrix.
pub fn eigenvectors(n: usize, rng: &mut SimRng) -> Matrix {
    let mut v = Matrix::identity(n, n) + gaussian(n, n, rng) * 0.3;
    for mut c in v.column_iter_mut() {
        let nrm = c.norm();
        c /= nrm;
    }
    v
}

/// Closed-loop states `x_0 … x_steps` under `reg`.
pub fn run(
    sys: &LtiSystem,
    reg: &mut dyn OnlineRegulator,
    x0: &Vector,
    steps: usize,
) -> Vec<Vector> {
    let mut xs = vec![x0.clone()];
    for _ in 0..steps {
        let x = sys.step(xs.last().unwrap(), reg.input(), None).unwrap();
        reg.observe(&x).unwrap();
        xs.push(x);
    }
    xs
}
