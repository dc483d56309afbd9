//! Minimization of `E[D(X, Y)]` over couplings of centred Gaussians
//! `X ~ N(0, A)`, `Y ~ N(0, B)`.
//!
//! The cost only depends on the cross-covariance `C = E[X Yᵀ]`, which is
//! admissible iff `[[A, C], [Cᵀ, B]]` is positive semidefinite. The minimum is
//! `−tr √(A D B Dᵀ)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, numerical_rank, pinv, sym_eigen, sym_pinv_sqrt, sym_sqrt};
use crate::manifold::DistanceJet;
use crate::rng;

/// Eigenvalues below this (relative) are negative beyond rounding.
const NEG_TOL: f64 = 1e-6;
/// Relative rank tolerance.
pub const RANK_TOL: f64 = 1e-9;
/// Block matrices with smaller eigenvalues are infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Symmetric positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymPsd(DMatrix<f64>);

impl SymPsd {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch("matrix must be square".into()));
        }
        let scale = m.amax().max(1.0);
        if (&m - m.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidInput("matrix is not symmetric".into()));
        }
        let lo = min_eigenvalue(&m);
        if lo < -1e-10 * scale {
            return Err(Error::NegativeSpectrum { eigenvalue: lo });
        }
        Ok(Self(crate::linalg::symmetrize(&m)))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Cost tensor `D`, pairing the first space with the second.
#[derive(Debug, Clone, PartialEq)]
pub struct CostBilinear(DMatrix<f64>);

impl CostBilinear {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("cost has non-finite entries".into()));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// A cross-covariance together with its cost and feasibility certificate.
#[derive(Debug, Clone)]
pub struct CouplingCovariance {
    pub c: DMatrix<f64>,
    /// Achieved cost `Σ C_ij D_ij`, when a cost was supplied.
    pub value: Option<f64>,
    pub feasible: bool,
    /// Smallest eigenvalue of the block matrix, when it was computed.
    pub min_eigenvalue: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    pub min_eigenvalue: f64,
}

pub fn coupling_cost(c: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    c.component_mul(d).sum()
}

fn check_dims(a: &DMatrix<f64>, d: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() || !b.is_square() || d.nrows() != a.nrows() || d.ncols() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, D is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            d.nrows(),
            d.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(())
}

/// Upper-triangular real Schur form `m = Q T Qᵀ`; fails when the spectrum is
/// not real.
fn triangular_schur(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let (mut q, mut t) = m.clone().schur().unpack();
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let mut i = 0;
    while i + 1 < n {
        if t[(i + 1, i)].abs() <= 1e-14 * scale {
            t[(i + 1, i)] = 0.0;
            i += 1;
            continue;
        }
        let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
        let half_tr = 0.5 * (a + d);
        let disc = 0.25 * (a - d) * (a - d) + b * c;
        if disc < -1e-12 * scale * scale {
            return Err(Error::NotDiagonalizable { residual: (-disc).sqrt() });
        }
        let lambda = half_tr + disc.max(0.0).sqrt();
        let v = if (lambda - a).abs() + b.abs() >= (lambda - d).abs() + c.abs() {
            DVector::from_vec(vec![b, lambda - a])
        } else {
            DVector::from_vec(vec![lambda - d, c])
        };
        let v = &v / v.norm();
        let (cs, sn) = (v[0], v[1]);
        let mut g = DMatrix::identity(n, n);
        g[(i, i)] = cs;
        g[(i + 1, i)] = sn;
        g[(i, i + 1)] = -sn;
        g[(i + 1, i + 1)] = cs;
        t = g.transpose() * &t * &g;
        q = &q * &g;
        t[(i + 1, i)] = 0.0;
        i += 1;
    }
    Ok((q, t))
}

/// Square root with nonnegative eigenvalues of a matrix that is diagonalizable
/// with nonnegative spectrum.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("matrix must be square".into()));
    }
    let n = m.nrows();
    let scale = m.amax();
    if n == 0 || scale == 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    if (m - m.transpose()).amax() <= 1e-12 * scale {
        let (vals, _) = sym_eigen(m);
        if vals[0] < -NEG_TOL * scale {
            return Err(Error::NegativeSpectrum { eigenvalue: vals[0] });
        }
        return Ok(sym_sqrt(m));
    }
    let (q, t) = triangular_schur(m)?;
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        if t[(i, i)] < -NEG_TOL * scale {
            return Err(Error::NegativeSpectrum { eigenvalue: t[(i, i)] });
        }
        r[(i, i)] = t[(i, i)].max(0.0).sqrt();
    }
    for k in 1..n {
        for i in 0..n - k {
            let j = i + k;
            let mut num = t[(i, j)];
            for l in i + 1..j {
                num -= r[(i, l)] * r[(l, j)];
            }
            let den = r[(i, i)] + r[(j, j)];
            r[(i, j)] = if den > 1e-12 * scale.sqrt() { num / den } else { 0.0 };
        }
    }
    let root = &q * r * q.transpose();
    let residual = (&root * &root - m).norm() / m.norm();
    if residual > 1e-8 {
        return Err(Error::NotDiagonalizable { residual });
    }
    Ok(root)
}

/// Square root with nonnegative eigenvalues of the product `A N` of two
/// symmetric positive semidefinite matrices, computed through the symmetric
/// matrix `A^{1/2} N A^{1/2}`.
pub fn psd_sqrt_product(a: &DMatrix<f64>, n: &DMatrix<f64>) -> DMatrix<f64> {
    let w = sym_sqrt(a);
    let s = &w * n * &w;
    let s_half_pinv = sym_pinv_sqrt(&s, 1e-14);
    &w * s_half_pinv * &w * n
}

/// `tr √(A N)` for symmetric positive semidefinite `A` and `N`.
pub fn trace_sqrt_product(a: &DMatrix<f64>, n: &DMatrix<f64>) -> f64 {
    let w = sym_sqrt(a);
    let (vals, _) = sym_eigen(&(&w * n * &w));
    vals.iter().map(|v| v.max(0.0).sqrt()).sum()
}

/// `tr √(A D B Dᵀ)` for symmetric positive semidefinite `A`, `B`, as the sum
/// of singular values of `A^{1/2} D B^{1/2}`. Accurate to machine precision
/// when `A D B Dᵀ` is singular, where the eigenvalue route loses half the
/// digits.
pub fn trace_sqrt_congruence(a: &DMatrix<f64>, d: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (sym_sqrt(a) * d * sym_sqrt(b)).singular_values().sum()
}

/// Minimum of `E[D(X, Y)]` over Gaussian couplings: `−tr √(A D B Dᵀ)`.
pub fn min_coupling_value(a: &DMatrix<f64>, d: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    check_dims(a, d, b)?;
    if d.amax() == 0.0 {
        return Ok(0.0);
    }
    Ok(-trace_sqrt_congruence(a, d, b))
}

/// Certificate that `[[A, C], [Cᵀ, B]]` is positive semidefinite.
pub fn feasibility_check(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Feasibility {
    let (n1, n2) = (a.nrows(), b.nrows());
    let mut block = DMatrix::zeros(n1 + n2, n1 + n2);
    block.view_mut((0, 0), (n1, n1)).copy_from(a);
    block.view_mut((n1, n1), (n2, n2)).copy_from(b);
    block.view_mut((0, n1), (n1, n2)).copy_from(c);
    block.view_mut((n1, 0), (n2, n1)).copy_from(&c.transpose());
    let lo = min_eigenvalue(&block);
    Feasibility { feasible: lo >= -FEASIBILITY_TOL, min_eigenvalue: lo }
}

/// The optimal cross-covariance of minimal rank.
pub fn c0_covariance(a: &DMatrix<f64>, d: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<CouplingCovariance> {
    check_dims(a, d, b)?;
    let (n1, n2) = (a.nrows(), b.nrows());
    let c = if d.amax() == 0.0 {
        DMatrix::zeros(n1, n2)
    } else {
        let wa = sym_sqrt(a);
        let wb = sym_sqrt(b);
        let svd = (&wa * d * &wb).svd(true, true);
        let u = svd.u.expect("requested");
        let vt = svd.v_t.expect("requested");
        let top = svd.singular_values.iter().fold(0.0_f64, |m, &s| m.max(s));
        let mut core = DMatrix::zeros(n1, n2);
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if s > RANK_TOL * top {
                core -= u.column(k) * vt.row(k);
            }
        }
        &wa * core * &wb
    };
    let f = feasibility_check(a, b, &c);
    Ok(CouplingCovariance {
        value: Some(coupling_cost(&c, d)),
        feasible: f.feasible,
        min_eigenvalue: Some(f.min_eigenvalue),
        c,
    })
}

/// `C⁺` and `C⁻` for diffusion tensors `ax`, `ay` and cost `q12`, with `u`
/// the unit direction at x and `u_prime` its transport to y.
pub fn extremal_pair(
    ax: &DMatrix<f64>,
    ay: &DMatrix<f64>,
    q12: &DMatrix<f64>,
    u: &DVector<f64>,
    u_prime: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    for m in [ax, ay] {
        let (vals, _) = sym_eigen(m);
        let top = vals[vals.len() - 1];
        if !(vals[0] > 1e-12 * top.max(0.0)) {
            return Err(Error::SingularDiffusion { eigenvalue: vals[0] });
        }
    }
    let n_cost = q12 * ay * q12.transpose();
    let root = psd_sqrt_product(ax, &n_cost);
    let s = ax * &n_cost;
    let p = pinv(&s, RANK_TOL) * (ax * q12 * ay);
    let base = -(root * p);
    let ax_inv = ax.clone().try_inverse().ok_or(Error::SingularDiffusion { eigenvalue: 0.0 })?;
    let ay_inv = ay.clone().try_inverse().ok_or(Error::SingularDiffusion { eigenvalue: 0.0 })?;
    let scale = 1.0 / (u.dot(&(&ax_inv * u)) * u_prime.dot(&(&ay_inv * u_prime))).sqrt();
    let rank_one = u * u_prime.transpose() * scale;
    Ok((&base + &rank_one, base - rank_one))
}

/// Extremal optimal covariances `(C⁺, C⁻)` for the cost `q12` of a distance
/// jet.
pub fn extremal_covariances(
    ax: &DMatrix<f64>,
    ay: &DMatrix<f64>,
    jet: &DistanceJet,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    extremal_pair(ax, ay, &jet.q12, &jet.u_xy, &(-&jet.u_yx))
}

fn haar_orthogonal<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

/// Random admissible cross-covariances `C = A^{1/2} R B^{1/2}` with
/// `‖R‖_op ≤ 1`. Every fourth sample has all singular values of `R` equal to
/// one (an extremal covariance). Deterministic for a fixed seed.
pub fn sample_feasible(a: &DMatrix<f64>, b: &DMatrix<f64>, count: usize, seed: u64) -> Vec<CouplingCovariance> {
    let wa = sym_sqrt(a);
    let wb = sym_sqrt(b);
    let (n1, n2) = (a.nrows(), b.nrows());
    (0..count)
        .map(|i| {
            let mut rng = rng::stream(seed, &[i as u64]);
            let (u, v, mu) = sample_core(n1, n2, i % 4 == 0, &mut rng);
            let mut core = DMatrix::zeros(n1, n2);
            for (j, m) in mu.iter().enumerate() {
                core += u.column(j) * v.column(j).transpose() * *m;
            }
            CouplingCovariance { c: &wa * core * &wb, value: None, feasible: true, min_eigenvalue: None }
        })
        .collect()
}

fn sample_core<R: Rng>(n1: usize, n2: usize, extremal: bool, rng: &mut R) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
    let u = haar_orthogonal(n1, rng);
    let v = haar_orthogonal(n2, rng);
    let mu = (0..n1.min(n2)).map(|_| if extremal { 1.0 } else { rng.random_range(-1.0..=1.0) }).collect();
    (u, v, mu)
}

/// Smallest cost `Σ C∘D` over the covariances [`sample_feasible`] would
/// return for the same arguments, without forming them.
pub fn sampled_min_cost(a: &DMatrix<f64>, b: &DMatrix<f64>, d: &DMatrix<f64>, count: usize, seed: u64) -> f64 {
    let g = sym_sqrt(a) * d * sym_sqrt(b);
    let (n1, n2) = (a.nrows(), b.nrows());
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, &[i as u64]);
            let (u, v, mu) = sample_core(n1, n2, i % 4 == 0, &mut rng);
            mu.iter().enumerate().map(|(j, m)| m * u.column(j).dot(&(&g * v.column(j)))).sum::<f64>()
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Numerical rank at the module tolerance.
pub fn rank(m: &DMatrix<f64>) -> usize {
    numerical_rank(m, RANK_TOL)
}
