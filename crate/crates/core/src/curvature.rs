//! Coarse Ricci curvature of a diffusion: the two-point value κ(x,y), its
//! directional limit κ(x,u), the variance-cancelling variant κ̃ and
//! condition (H).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::assignment;
use crate::coupling::trace_sqrt_congruence;
use crate::error::{Error, Result};
use crate::fields::DiffusionSpec;
use crate::linalg::{extrapolate_to_zero, lyapunov_solve, mean, sym_eigen, symmetrize, variance};
use crate::manifold::{DistanceJet, Point, TangentVector};
use crate::rng;
use crate::simulate::{sample_endpoint, Noise};

/// Default δ ladder for directional limits.
pub const DELTA_LADDER: [f64; 3] = [0.1, 0.05, 0.025];
/// Tolerance on condition (H), relative to `max(1, ‖A‖)`.
pub const H_TOL: f64 = 1e-8;
/// Samples per exact-assignment batch in the direct estimator.
pub const DIRECT_BATCH: usize = 500;
/// Euler substeps per sampled endpoint in the direct estimator.
pub const DIRECT_SUBSTEPS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CurvatureTerms {
    /// First-order (drift) contribution.
    pub drift: f64,
    /// Second-order contribution: the curvature term for directional values,
    /// the whole diffusion part for two-point values.
    pub riemann: f64,
    /// Non-positive contribution of the derivative of `A`.
    pub penalty: f64,
}

#[derive(Debug, Clone)]
pub enum Location {
    Pair(Point, Point),
    Direction(TangentVector),
}

#[derive(Debug, Clone)]
pub struct CurvatureReport {
    pub kappa: f64,
    pub terms: CurvatureTerms,
    pub location: Location,
}

impl CurvatureReport {
    fn new(terms: CurvatureTerms, location: Location) -> Self {
        Self { kappa: terms.drift + terms.riemann + terms.penalty, terms, location }
    }
}

/// Monte Carlo estimate of κ(x,y) from its definition.
#[derive(Debug, Clone)]
pub struct DirectEstimate {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Extrapolated value of each batch.
    pub batch_values: Vec<f64>,
    /// Batch-mean of `(d − W₁)/(t d)` for every rung of the time ladder.
    pub per_t: Vec<f64>,
    /// Set when some matched pair came within 10% of the cut locus.
    pub cut_risk: bool,
}

impl DirectEstimate {
    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

fn contract(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

/// Drift and diffusion parts of κ(x,y) for a precomputed jet.
pub fn kappa_pair_terms(spec: &DiffusionSpec, x: &DVector<f64>, y: &DVector<f64>, jet: &DistanceJet) -> CurvatureTerms {
    let ax = spec.a_frame(x, &jet.frame_x);
    let ay = spec.a_frame(y, &jet.frame_y);
    let drift = pair_drift(spec, x, y, jet);
    let second = -0.5 * (contract(&jet.q1, &ax) + contract(&jet.q2, &ay)) + trace_sqrt_congruence(&ax, &jet.q12, &ay);
    CurvatureTerms { drift, riemann: second, penalty: 0.0 }
}

/// `−⟨l₁, F(x)⟩ − ⟨l₂, F(y)⟩`. A linear drift `−kx` contracts Euclidean
/// distances at rate exactly `k`.
fn pair_drift(spec: &DiffusionSpec, x: &DVector<f64>, y: &DVector<f64>, jet: &DistanceJet) -> f64 {
    if let Some(k) = spec.drift.linear_rate() {
        return k;
    }
    let fx = spec.f_frame(x, &jet.frame_x);
    let fy = spec.f_frame(y, &jet.frame_y);
    -jet.l1.dot(&fx) - jet.l2.dot(&fy)
}

/// κ(x,y) from the closed-form distance jet.
pub fn kappa_pair(spec: &DiffusionSpec, x: &Point, y: &Point) -> Result<CurvatureReport> {
    let jet = spec.manifold.distance_jet(x, y)?;
    let terms = kappa_pair_terms(spec, &x.coords, &y.coords, &jet);
    Ok(CurvatureReport::new(terms, Location::Pair(x.clone(), y.clone())))
}

/// `−¼ Ē : N` with `Ā N + N Ā = Ē`, in an orthonormal basis of `u⊥`.
pub fn quotient_penalty(a_perp: &DMatrix<f64>, e_perp: &DMatrix<f64>) -> f64 {
    if a_perp.nrows() == 0 {
        return 0.0;
    }
    let n = lyapunov_solve(a_perp, e_perp);
    -0.25 * contract(e_perp, &n)
}

fn check_full_rank(a: &DMatrix<f64>) -> Result<()> {
    let (vals, _) = sym_eigen(a);
    let top = vals[vals.len() - 1];
    if !(vals[0] > 1e-12 * top.max(0.0)) {
        return Err(Error::SingularDiffusion { eigenvalue: vals[0] });
    }
    Ok(())
}

fn unit(spec: &DiffusionSpec, u: &TangentVector) -> Result<DVector<f64>> {
    let norm = spec.manifold.norm(&u.components);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidInput("direction must be a nonzero tangent vector".into()));
    }
    Ok(&u.components / norm)
}

struct DirectionalData {
    a: DMatrix<f64>,
    grad_a: DMatrix<f64>,
    drift: f64,
    riemann: f64,
}

fn directional_data(spec: &DiffusionSpec, x: &Point, u: &DVector<f64>) -> DirectionalData {
    let m = &spec.manifold;
    let frame = m.adapted_frame(&x.coords, u);
    let a = spec.a_frame(&x.coords, &frame);
    let grad_a = spec.diffusion.covariant_derivative(m, &x.coords, u, &frame);
    let drift = match spec.drift.linear_rate() {
        Some(k) => k,
        None => -spec.drift.covariant_derivative(m, &x.coords, u, &frame)[0],
    };
    let riemann = 0.5 * m.curvature() * (a.trace() - a[(0, 0)]);
    DirectionalData { a, grad_a: symmetrize(&grad_a), drift, riemann }
}

fn tail(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    m.view((1, 1), (n - 1, n - 1)).into_owned()
}

/// Directional curvature κ(x,u), the limit of κ(x, exp_x(δu)) as δ → 0.
pub fn kappa_dir(spec: &DiffusionSpec, x: &Point, u: &TangentVector) -> Result<CurvatureReport> {
    let uu = unit(spec, u)?;
    let d = directional_data(spec, x, &uu);
    check_full_rank(&d.a)?;
    let penalty = quotient_penalty(&tail(&d.a), &tail(&d.grad_a));
    let terms = CurvatureTerms { drift: d.drift, riemann: d.riemann, penalty };
    Ok(CurvatureReport::new(terms, Location::Direction(u.clone())))
}

/// Polynomial extrapolation to δ = 0 of κ(x, exp_x(δu)) over `deltas`.
pub fn kappa_dir_by_limit(spec: &DiffusionSpec, x: &Point, u: &TangentVector, deltas: &[f64]) -> Result<f64> {
    limit(spec, x, u, deltas, |y| Ok(kappa_pair(spec, x, y)?.kappa))
}

fn limit(
    spec: &DiffusionSpec,
    x: &Point,
    u: &TangentVector,
    deltas: &[f64],
    f: impl Fn(&Point) -> Result<f64>,
) -> Result<f64> {
    if deltas.is_empty() || deltas.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::InvalidInput("δ ladder must be non-empty and positive".into()));
    }
    let uu = unit(spec, u)?;
    let m = &spec.manifold;
    let mut ys = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let y = m.project_point(m.exp_raw(&x.coords, &(&uu * delta)));
        ys.push(f(&y)?);
    }
    Ok(extrapolate_to_zero(deltas, &ys))
}

/// `|u^i (gu)_k (gu)_m ∇_i A^{km}|` for the unit vector along `u`.
pub fn h_residual(spec: &DiffusionSpec, x: &Point, u: &TangentVector) -> Result<f64> {
    let uu = unit(spec, u)?;
    let m = &spec.manifold;
    let frame = m.adapted_frame(&x.coords, &uu);
    let grad_a = spec.diffusion.covariant_derivative(m, &x.coords, &uu, &frame);
    Ok(grad_a[(0, 0)].abs())
}

fn h_tolerance(a: &DMatrix<f64>) -> f64 {
    H_TOL * a.amax().max(1.0)
}

/// κ̃(x,u) for fields satisfying condition (H).
pub fn kappa_tilde_dir(spec: &DiffusionSpec, x: &Point, u: &TangentVector) -> Result<CurvatureReport> {
    let uu = unit(spec, u)?;
    let d = directional_data(spec, x, &uu);
    check_full_rank(&d.a)?;
    let tol = h_tolerance(&d.a);
    let residual = d.grad_a[(0, 0)].abs();
    if residual > tol {
        return Err(Error::HViolation { residual, tolerance: tol });
    }
    let a00 = d.a[(0, 0)];
    let au = d.a.column(0).into_owned();
    let eu = d.grad_a.column(0).into_owned();
    let variance_term = -eu.norm_squared() / (2.0 * a00);
    let a_prime = &d.a - &au * au.transpose() / a00;
    let b = &d.grad_a - (&eu * au.transpose() + &au * eu.transpose()) / a00;
    let penalty = variance_term + quotient_penalty(&tail(&a_prime), &tail(&b));
    let terms = CurvatureTerms { drift: d.drift, riemann: d.riemann, penalty };
    Ok(CurvatureReport::new(terms, Location::Direction(u.clone())))
}

/// κ̃(x,y) for fields satisfying condition (H) between `x` and `y`.
pub fn kappa_tilde_pair(spec: &DiffusionSpec, x: &Point, y: &Point) -> Result<CurvatureReport> {
    let jet = spec.manifold.distance_jet(x, y)?;
    let ax = spec.a_frame(&x.coords, &jet.frame_x);
    let ay = spec.a_frame(&y.coords, &jet.frame_y);
    let (ax00, ay00) = (ax[(0, 0)], ay[(0, 0)]);
    let tol = h_tolerance(&ax).max(h_tolerance(&ay));
    if (ax00 - ay00).abs() > tol {
        return Err(Error::HViolation { residual: (ax00 - ay00).abs(), tolerance: tol });
    }
    check_full_rank(&ax)?;
    check_full_rank(&ay)?;
    let drift = pair_drift(spec, &x.coords, &y.coords, &jet);
    // Frame coordinates: u(x,y) = e₁ and u(y,x) = −e₁.
    let axu = ax.column(0).into_owned();
    let ayu = ay.column(0).into_owned();
    let c0 = &axu * ayu.transpose() / ax00;
    let ax_p = &ax - &axu * axu.transpose() / ax00;
    let ay_p = &ay - &ayu * ayu.transpose() / ay00;
    let second = -0.5 * (contract(&jet.q1, &ax) + contract(&jet.q2, &ay)) - contract(&c0, &jet.q12)
        + trace_sqrt_congruence(&ax_p, &jet.q12, &ay_p);
    let terms = CurvatureTerms { drift, riemann: second, penalty: 0.0 };
    Ok(CurvatureReport::new(terms, Location::Pair(x.clone(), y.clone())))
}

/// Polynomial extrapolation of κ̃(x, exp_x(δu)) to δ = 0.
pub fn kappa_tilde_dir_by_limit(spec: &DiffusionSpec, x: &Point, u: &TangentVector, deltas: &[f64]) -> Result<f64> {
    limit(spec, x, u, deltas, |y| Ok(kappa_tilde_pair(spec, x, y)?.kappa))
}

/// `(tr H, tr K)` in `tr √(M² + εN) = tr M + ε tr H + ε² tr K + O(ε³)` for
/// symmetric positive definite `M`.
pub fn sqrt_perturbation_traces(m: &DMatrix<f64>, n: &DMatrix<f64>) -> Result<(f64, f64)> {
    if !m.is_square() || m.shape() != n.shape() {
        return Err(Error::DimensionMismatch("M and N must be square of equal size".into()));
    }
    let (lam, v) = sym_eigen(m);
    if !lam.is_empty() && !(lam[0] > 0.0) {
        return Err(Error::NonPositiveSpectrum { eigenvalue: lam[0] });
    }
    let nt = v.transpose() * n * &v;
    let k = lam.len();
    let tr_h = (0..k).map(|i| nt[(i, i)] / (2.0 * lam[i])).sum();
    let mut tr_k = 0.0;
    for i in 0..k {
        for j in 0..k {
            tr_k -= nt[(i, j)] * nt[(j, i)] / (4.0 * lam[i] * lam[j] * (lam[i] + lam[j]));
        }
    }
    Ok((tr_h, tr_k))
}

/// `inf_u κ(x,u)` over unit directions, for diffusions `A = s g⁻¹` (where
/// κ(x,·) is a quadratic form).
pub fn kappa_min(spec: &DiffusionSpec, x: &Point) -> Result<f64> {
    let s = spec
        .diffusion
        .is_metric()
        .ok_or_else(|| Error::InvalidInput("minimum over directions needs A = s g⁻¹".into()))?;
    let m = &spec.manifold;
    let frame = m.frame(&x.coords);
    let j = spec.drift.jacobian_frame(m, &x.coords, &frame);
    let n = m.dim;
    let q = -symmetrize(&j) + DMatrix::identity(n, n) * (0.5 * s * m.curvature() * (n as f64 - 1.0));
    Ok(sym_eigen(&q).0[0])
}

/// Monte Carlo estimate of `(d − W₁(δₓPᵗ, δ_yPᵗ))/(t d)` extrapolated to
/// `t = 0`. `W₁` between batches of `DIRECT_BATCH` samples is computed by
/// exact assignment; the confidence interval is the 95% Student-t interval
/// over batches.
pub fn estimate_kappa_direct(
    spec: &DiffusionSpec,
    x: &Point,
    y: &Point,
    t_ladder: &[f64],
    samples: usize,
    seed: u64,
) -> Result<DirectEstimate> {
    let m = &spec.manifold;
    if t_ladder.is_empty() || t_ladder.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidInput("time ladder must be non-empty and positive".into()));
    }
    let batch = DIRECT_BATCH.min(samples);
    let batches = samples.checked_div(batch).unwrap_or(0);
    if batches < 2 {
        return Err(Error::InvalidInput(format!("need at least two batches of {batch} samples")));
    }
    let d = m.distance(x, y);
    if !(d > 0.0) || d >= m.cut_limit() {
        return Err(Error::CutLocus { distance: d, limit: m.cut_limit() });
    }
    let risk_limit = 0.9 * m.diameter();
    let jobs: Vec<(usize, usize)> = (0..t_ladder.len()).flat_map(|ti| (0..batches).map(move |b| (ti, b))).collect();
    let results: Vec<(f64, bool)> = jobs
        .par_iter()
        .map(|&(ti, b)| {
            let t = t_ladder[ti];
            let mut rx = rng::stream(seed, &[ti as u64, b as u64, 0]);
            let mut ry = rng::stream(seed, &[ti as u64, b as u64, 1]);
            let xs: Vec<DVector<f64>> = (0..batch)
                .map(|_| sample_endpoint(spec, &x.coords, t, DIRECT_SUBSTEPS, Noise::Gaussian, &mut rx))
                .collect();
            let ys: Vec<DVector<f64>> = (0..batch)
                .map(|_| sample_endpoint(spec, &y.coords, t, DIRECT_SUBSTEPS, Noise::Gaussian, &mut ry))
                .collect();
            let mut cost = Vec::with_capacity(batch * batch);
            for p in &xs {
                for q in &ys {
                    cost.push(m.distance_raw(p, q));
                }
            }
            let (assign, total) = assignment::solve(&cost, batch);
            let risk = assign.iter().enumerate().any(|(i, &j)| cost[i * batch + j] > risk_limit);
            let w1 = total / batch as f64;
            ((d - w1) / (t * d), risk)
        })
        .collect();
    let cut_risk = results.iter().any(|r| r.1);
    let value = |ti: usize, b: usize| results[ti * batches + b].0;
    let per_t: Vec<f64> =
        (0..t_ladder.len()).map(|ti| mean(&(0..batches).map(|b| value(ti, b)).collect::<Vec<_>>())).collect();
    let batch_values: Vec<f64> = (0..batches)
        .map(|b| {
            let ys: Vec<f64> = (0..t_ladder.len()).map(|ti| value(ti, b)).collect();
            extrapolate_to_zero(t_ladder, &ys)
        })
        .collect();
    let est = mean(&batch_values);
    let se = (variance(&batch_values) / batches as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (batches - 1) as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let q = dist.inverse_cdf(0.975);
    Ok(DirectEstimate { estimate: est, ci_low: est - q * se, ci_high: est + q * se, batch_values, per_t, cut_risk })
}
