//! Spectral gaps of reversible generators on the circle and on zonal
//! functions of the 2-sphere, and the curvature lower bounds they dominate.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::curvature::kappa_min;
use crate::error::{Error, Result};
use crate::fields::{DiffusionField, DiffusionSpec, DriftField, Potential};
use crate::linalg::{extrapolate_to_zero, golden_section_maximize, pairwise_sum, sym_eigen};
use crate::manifold::{ManifoldKind, ModelManifold, Point};

/// Smallest admissible grid.
pub const MIN_GRID: usize = 16;
/// Tolerance on the row-sum and reversibility residuals of an operator.
pub const OPERATOR_TOL: f64 = 1e-6;
/// Tolerance of the pointwise curvature-dimension check, relative to
/// `max(1, |Γ₂|)`.
pub const CD_TOL: f64 = 1e-3;
/// Cells next to each pole left out of pointwise checks.
pub const POLE_CELLS: usize = 2;
/// Cells with `|f′|` below this are left out of the derivative identity.
pub const CRITICAL_GRADIENT: f64 = 1e-3;

/// Diffusion coefficient `a(θ)` on the circle with its first two θ
/// derivatives.
pub type Profile = Arc<dyn Fn(f64) -> (f64, f64, f64) + Send + Sync>;

pub fn constant_profile(s: f64) -> Profile {
    Arc::new(move |_| (s, 0.0, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    /// Uniform periodic grid `θ_j = j h` on a circle.
    Circle,
    /// Offset colatitude grid `θ_j = (j + ½) h` on the 2-sphere (zonal
    /// functions only).
    Zonal,
}

/// Reversible generator `L f = (1/2w)(w a f′)′` discretized in flux form,
/// with `w = e^{−φ}` on the circle and `w = e^{−φ} sin θ` on the sphere.
#[derive(Clone)]
pub struct DiscretizedOperator {
    pub kind: GridKind,
    pub radius: f64,
    /// Grid nodes (θ).
    pub nodes: Vec<f64>,
    pub step: f64,
    /// Dense matrix of `L`.
    pub matrix: DMatrix<f64>,
    /// Discrete reversible probability `π`.
    pub measure_weights: Vec<f64>,
    pub potential: Potential,
    pub profile: Profile,
    /// `L_{j,j−1}`, `L_{jj}`, `L_{j,j+1}` (periodic on the circle).
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    /// Off-diagonal of the symmetrized `−L`: entry `j` couples `j` and `j+1`.
    sym_off: Vec<f64>,
    /// Extra diagonal of the first azimuthal sector (zonal grids).
    sector_shift: Option<Vec<f64>>,
}

impl fmt::Debug for DiscretizedOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscretizedOperator")
            .field("kind", &self.kind)
            .field("radius", &self.radius)
            .field("size", &self.nodes.len())
            .field("potential", &self.potential)
            .finish()
    }
}

impl DiscretizedOperator {
    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    /// `L f` using the three-point stencil.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let m = self.size();
        assert_eq!(f.len(), m, "grid function has the wrong length");
        (0..m)
            .map(|j| {
                let mut v = self.diag[j] * f[j];
                match self.kind {
                    GridKind::Circle => {
                        v += self.lower[j] * f[(j + m - 1) % m] + self.upper[j] * f[(j + 1) % m];
                    }
                    GridKind::Zonal => {
                        if j > 0 {
                            v += self.lower[j] * f[j - 1];
                        }
                        if j + 1 < m {
                            v += self.upper[j] * f[j + 1];
                        }
                    }
                }
                v
            })
            .collect()
    }

    /// Point of the manifold at node `j`.
    pub fn point(&self, j: usize) -> Point {
        let (s, c) = self.nodes[j].sin_cos();
        let r = self.radius;
        let coords = match self.kind {
            GridKind::Circle => DVector::from_vec(vec![r * s, r * c]),
            GridKind::Zonal => DVector::from_vec(vec![r * s, 0.0, r * c]),
        };
        Point { coords }
    }

    /// Largest `|Σ_k L_jk|` relative to the largest entry.
    pub fn row_sum_residual(&self) -> f64 {
        let scale = self.diag.iter().fold(0.0_f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE);
        let ones = vec![1.0; self.size()];
        self.apply(&ones).iter().fold(0.0_f64, |a, b| a.max(b.abs())) / scale
    }

    /// Largest `|π_j L_jk − π_k L_kj|` relative to the largest `|π_j L_jj|`.
    pub fn reversibility_residual(&self) -> f64 {
        let m = self.size();
        let w = &self.measure_weights;
        let scale = (0..m).fold(0.0_f64, |a, j| a.max((w[j] * self.diag[j]).abs())).max(f64::MIN_POSITIVE);
        let mut worst = 0.0_f64;
        for j in 0..m {
            let k = (j + 1) % m;
            if self.kind == GridKind::Zonal && k == 0 {
                continue;
            }
            worst = worst.max((w[j] * self.upper[j] - w[k] * self.lower[k]).abs());
        }
        worst / scale
    }

    fn sym_diag(&self) -> Vec<f64> {
        self.diag.iter().map(|d| -d).collect()
    }
}

fn build(
    kind: GridKind,
    radius: f64,
    m: usize,
    profile: Profile,
    potential: Potential,
    scale_for_sector: Option<f64>,
) -> Result<DiscretizedOperator> {
    if m < MIN_GRID {
        return Err(Error::GridTooCoarse(format!("grid size {m} is below {MIN_GRID}")));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidInput("radius must be positive".into()));
    }
    let (h, offset) = match kind {
        GridKind::Circle => (2.0 * PI / m as f64, 0.0),
        GridKind::Zonal => (PI / m as f64, 0.5),
    };
    let nodes: Vec<f64> = (0..m).map(|j| (j as f64 + offset) * h).collect();
    let weight = |theta: f64| {
        let e = (-potential.theta_jet(theta).0).exp();
        match kind {
            GridKind::Circle => e,
            GridKind::Zonal => e * theta.sin().max(0.0),
        }
    };
    let w: Vec<f64> = nodes.iter().map(|&t| weight(t)).collect();
    // Flux coefficient at θ_{j+½}.
    let mut flux = Vec::with_capacity(m);
    for &t in &nodes {
        let half = t + 0.5 * h;
        let a = profile(half).0;
        if !(a > 0.0) {
            return Err(Error::InvalidInput(format!("diffusion coefficient {a} is not positive")));
        }
        let c = if kind == GridKind::Zonal && (half - PI).abs() < 0.25 * h { 0.0 } else { weight(half) * a };
        flux.push(c);
    }
    let k = 1.0 / (2.0 * radius * radius * h * h);
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    for j in 0..m {
        let right = flux[j];
        let left = match kind {
            GridKind::Circle => flux[(j + m - 1) % m],
            GridKind::Zonal => {
                if j == 0 {
                    0.0
                } else {
                    flux[j - 1]
                }
            }
        };
        upper[j] = k * right / w[j];
        lower[j] = k * left / w[j];
        diag[j] = -(upper[j] + lower[j]);
    }
    if kind == GridKind::Zonal {
        upper[m - 1] = 0.0;
        lower[0] = 0.0;
    }
    let total = pairwise_sum(&w);
    let measure_weights: Vec<f64> = w.iter().map(|x| x / total).collect();
    let sym_off: Vec<f64> = (0..m).map(|j| -k * flux[j] / (w[j] * w[(j + 1) % m]).sqrt()).collect();
    let mut matrix = DMatrix::zeros(m, m);
    for j in 0..m {
        matrix[(j, j)] += diag[j];
        match kind {
            GridKind::Circle => {
                matrix[(j, (j + 1) % m)] += upper[j];
                matrix[(j, (j + m - 1) % m)] += lower[j];
            }
            GridKind::Zonal => {
                if j + 1 < m {
                    matrix[(j, j + 1)] = upper[j];
                }
                if j > 0 {
                    matrix[(j, j - 1)] = lower[j];
                }
            }
        }
    }
    let sector_shift =
        scale_for_sector.map(|s| nodes.iter().map(|t| s / (2.0 * radius * radius * t.sin().powi(2))).collect());
    let op = DiscretizedOperator {
        kind,
        radius,
        nodes,
        step: h,
        matrix,
        measure_weights,
        potential,
        profile,
        lower,
        diag,
        upper,
        sym_off,
        sector_shift,
    };
    let res = op.row_sum_residual().max(op.reversibility_residual());
    if !(res <= OPERATOR_TOL) {
        return Err(Error::GridTooCoarse(format!("operator residual {res:e} exceeds {OPERATOR_TOL:e}")));
    }
    Ok(op)
}

/// `L f = (1/2w)(w a f′)′` with `w = e^{−φ}` on the circle of radius `radius`
/// (derivatives in arc length).
pub fn discretize_circle(radius: f64, profile: Profile, potential: Potential, m: usize) -> Result<DiscretizedOperator> {
    build(GridKind::Circle, radius, m, profile, potential, None)
}

fn reversible_parts(spec: &DiffusionSpec) -> Result<(f64, Potential)> {
    let s = match spec.diffusion {
        DiffusionField::Metric(s) => s,
        _ => return Err(Error::InvalidInput("spectral discretization needs A = s g⁻¹".into())),
    };
    let potential = match (&spec.drift, &spec.potential) {
        (DriftField::Zero, _) => Potential::zero(),
        (DriftField::Gradient { potential, scale }, _) if (*scale - s).abs() <= 1e-12 * s => potential.clone(),
        _ => return Err(Error::InvalidInput("spectral discretization needs the reversible drift −(s/2)∇φ".into())),
    };
    Ok((s, potential))
}

/// Discretizes `L = (s/2)(Δ − ∇φ·∇)` on the circle or on zonal functions of
/// the 2-sphere.
pub fn discretize(spec: &DiffusionSpec, m: usize) -> Result<DiscretizedOperator> {
    let man = &spec.manifold;
    let (s, potential) = reversible_parts(spec)?;
    if !matches!(potential, Potential::Zonal(_)) {
        return Err(Error::InvalidInput("spectral discretization needs a zonal potential".into()));
    }
    match (man.kind, man.dim) {
        (ManifoldKind::Sphere, 1) => build(GridKind::Circle, man.radius, m, constant_profile(s), potential, None),
        (ManifoldKind::Sphere, 2) => build(GridKind::Zonal, man.radius, m, constant_profile(s), potential, Some(s)),
        _ => Err(Error::InvalidInput(format!("no spectral discretization for {man}"))),
    }
}

/// Number of eigenvalues below `x` of the symmetric tridiagonal matrix.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for j in 0..diag.len() {
        let b2 = if j == 0 { 0.0 } else { off[j - 1] * off[j - 1] };
        q = diag[j] - x - if j == 0 { 0.0 } else { b2 / q };
        if q == 0.0 {
            q = -f64::EPSILON * (diag[j].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// `k`-th smallest (0-based) eigenvalue of a symmetric tridiagonal matrix by
/// bisection.
fn tridiagonal_eigenvalue(diag: &[f64], off: &[f64], k: usize) -> f64 {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for j in 0..n {
        let r = if j > 0 { off[j - 1].abs() } else { 0.0 } + if j + 1 < n { off[j].abs() } else { 0.0 };
        lo = lo.min(diag[j] - r);
        hi = hi.max(diag[j] + r);
    }
    let tol = 4.0 * f64::EPSILON * hi.abs().max(lo.abs());
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, off, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Smallest `count` eigenvalues of `−L` per sector: the zonal sector, and on
/// the sphere also the first azimuthal sector.
pub fn spectrum(opr: &DiscretizedOperator, count: usize) -> (Vec<f64>, Option<Vec<f64>>) {
    let m = opr.size();
    let count = count.min(m);
    let d = opr.sym_diag();
    match opr.kind {
        GridKind::Circle => {
            let mut s = DMatrix::zeros(m, m);
            for j in 0..m {
                s[(j, j)] = d[j];
                let k = (j + 1) % m;
                s[(j, k)] += opr.sym_off[j];
                s[(k, j)] += opr.sym_off[j];
            }
            let vals = sym_eigen(&s).0;
            (vals.iter().take(count).copied().collect(), None)
        }
        GridKind::Zonal => {
            let off = &opr.sym_off[..m - 1];
            let zonal = (0..count).map(|k| tridiagonal_eigenvalue(&d, off, k)).collect();
            let shifted: Vec<f64> = d
                .iter()
                .zip(opr.sector_shift.as_ref().expect("zonal grids carry the sector shift"))
                .map(|(a, b)| a + b)
                .collect();
            let sector = (0..count).map(|k| tridiagonal_eigenvalue(&shifted, off, k)).collect();
            (zonal, Some(sector))
        }
    }
}

/// Smallest nonzero eigenvalue of `−L`.
pub fn spectral_gap(opr: &DiscretizedOperator) -> Result<f64> {
    let (zonal, sector) = spectrum(opr, 2);
    let scale = opr.diag.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    if !(zonal[1] > 1e-9 * scale) {
        return Err(Error::DegenerateSpectrum { next: zonal[1] });
    }
    Ok(match sector {
        Some(s) => zonal[1].min(s[0]),
        None => zonal[1],
    })
}

/// Spectral gap extrapolated from grids `m` and `2m`, assuming second-order
/// convergence.
pub fn spectral_gap_extrapolated(spec: &DiffusionSpec, m: usize) -> Result<(f64, f64)> {
    let coarse = spectral_gap(&discretize(spec, m)?)?;
    let fine = spectral_gap(&discretize(spec, 2 * m)?)?;
    let h = [1.0, 0.25];
    Ok((extrapolate_to_zero(&h, &[coarse, fine]), fine))
}

/// Lichnerowicz bound `nK/(n−1)` for the spectral gap of `Δ` when
/// `Ric ≥ K`.
pub fn lichnerowicz_bound(n: usize, k: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::DimensionOne);
    }
    if !(k > 0.0) {
        return Ok(0.0);
    }
    Ok(n as f64 * k / (n as f64 - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChenWangBranch {
    /// `π²/D² + max(π/(4n), 1 − 2/π) K` for `K ≥ 0`.
    NonNegativeDiameter,
    /// `nK / ((n−1)(1 − cosⁿ(D√(K(n−1))/2)))` for `K ≥ 0`, `n > 1`.
    NonNegativeCosine,
    /// `π²/D² + (π/2 − 1) K` for `K ≤ 0`.
    NonPositiveDiameter,
    /// `π² √(1 − 2D²K/π⁴) / (D² cosh(D√(−K(n−1))/2))` for `K ≤ 0`, `n > 1`.
    NonPositiveCosh,
}

impl fmt::Display for ChenWangBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ChenWangBranch::NonNegativeDiameter => "cw_nonneg_diameter",
            ChenWangBranch::NonNegativeCosine => "cw_nonneg_cosine",
            ChenWangBranch::NonPositiveDiameter => "cw_nonpos_diameter",
            ChenWangBranch::NonPositiveCosh => "cw_nonpos_cosh",
        };
        f.write_str(s)
    }
}

/// Chen–Wang diameter bounds for the spectral gap of `Δ`, for every branch
/// that applies to `(n, K, D)`.
pub fn chen_wang_bounds(n: usize, k: f64, d: f64) -> Result<Vec<(ChenWangBranch, f64)>> {
    if n == 0 || !(d > 0.0) || !k.is_finite() {
        return Err(Error::InvalidInput("need n ≥ 1, D > 0 and finite K".into()));
    }
    let nf = n as f64;
    let base = PI * PI / (d * d);
    let mut out = Vec::new();
    if k >= 0.0 {
        out.push((ChenWangBranch::NonNegativeDiameter, base + (PI / (4.0 * nf)).max(1.0 - 2.0 / PI) * k));
        if n > 1 && k > 0.0 {
            let arg = (d * (k * (nf - 1.0)).sqrt() / 2.0).clamp(0.0, PI / 2.0);
            out.push((ChenWangBranch::NonNegativeCosine, nf * k / ((nf - 1.0) * (1.0 - arg.cos().powi(n as i32)))));
        }
    }
    if k <= 0.0 {
        out.push((ChenWangBranch::NonPositiveDiameter, base + (PI / 2.0 - 1.0) * k));
        if n > 1 {
            let ch = (d * (-k * (nf - 1.0)).sqrt() / 2.0).cosh();
            let root = (1.0 - 2.0 * d * d * k / PI.powi(4)).sqrt();
            out.push((ChenWangBranch::NonPositiveCosh, PI * PI * root / (d * d * ch)));
        }
    }
    Ok(out)
}

fn check_field(values: &[f64], weights: &[f64]) -> Result<()> {
    if values.len() != weights.len() || values.is_empty() {
        return Err(Error::DimensionMismatch("field and measure differ in length".into()));
    }
    Ok(())
}

/// `1 / Σ π_j/(κ_j − c)`, or 0 when some `κ_j ≤ c`.
fn harmonic_term(kappa: &[f64], weights: &[f64], c: f64) -> f64 {
    let mut terms = Vec::with_capacity(kappa.len());
    for (k, w) in kappa.iter().zip(weights) {
        if *k <= c {
            return 0.0;
        }
        terms.push(w / (k - c));
    }
    1.0 / pairwise_sum(&terms)
}

fn positive_min(values: &[f64]) -> Result<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lo > 0.0) {
        return Err(Error::NonPositiveCurvature { minimum: lo });
    }
    Ok(lo)
}

/// `(∫ dπ/κ)⁻¹` on the grid.
pub fn harmonic_mean_bound(kappa: &[f64], weights: &[f64]) -> Result<f64> {
    check_field(kappa, weights)?;
    positive_min(kappa)?;
    Ok(harmonic_term(kappa, weights, 0.0))
}

fn maximize_over_c(values: &[f64], weights: &[f64], factor: f64, upper: f64) -> (f64, f64) {
    let f = |c: f64| factor * c + harmonic_term(values, weights, c);
    let (c, v) = golden_section_maximize(f, 0.0, upper, 1e-12 * upper.max(1.0));
    [(0.0, f(0.0)), (upper, f(upper)), (c, v)].into_iter().fold((0.0, f64::NEG_INFINITY), |best, cand| {
        if cand.1 > best.1 {
            cand
        } else {
            best
        }
    })
}

/// `max_{0 ≤ c ≤ K} (n/(n−1)) c + (∫ dπ/(Ric − c))⁻¹` with `K = inf Ric`.
pub fn interpolated_bound(ric: &[f64], weights: &[f64], n: usize) -> Result<(f64, f64)> {
    check_field(ric, weights)?;
    if n < 2 {
        return Err(Error::DimensionOne);
    }
    let k = positive_min(ric)?;
    let nf = n as f64;
    Ok(maximize_over_c(ric, weights, nf / (nf - 1.0), k))
}

/// `max_{0 ≤ c < R} (n′/(n′−1)) c + (∫ dπ/(ρ − c))⁻¹` with `R = inf ρ`
/// (`n′ = ∞` allowed).
pub fn cd_bound(rho: &[f64], weights: &[f64], n_prime: f64) -> Result<(f64, f64)> {
    check_field(rho, weights)?;
    if !(n_prime > 1.0) {
        return Err(Error::InvalidInput("n′ must exceed 1".into()));
    }
    let r = positive_min(rho)?;
    let factor = if n_prime.is_infinite() { 1.0 } else { n_prime / (n_prime - 1.0) };
    Ok(maximize_over_c(rho, weights, factor, (r - 1e-12).max(0.0)))
}

/// `ρ(x) = (s/2) inf_{|u|=1} [Ric(u,u) + ∇²φ(u,u) − (∇_uφ)²/(n′−n)]`, the
/// best constant in `CD(ρ, n′)` for `L = (s/2)(Δ − ∇φ·∇)`.
pub fn bakry_emery_rho(spec: &DiffusionSpec, n_prime: f64) -> Result<impl Fn(&Point) -> f64 + '_> {
    let (s, potential) = reversible_parts(spec)?;
    let m: &ModelManifold = &spec.manifold;
    let n = m.dim as f64;
    if n_prime < n || n_prime.is_nan() {
        return Err(Error::DimensionMismatch(format!("n′ = {n_prime} is below the dimension {n}")));
    }
    if n_prime == n && !potential.is_zero() {
        return Err(Error::InvalidInput("n′ = n requires a vanishing potential".into()));
    }
    let ric = m.curvature() * (n - 1.0);
    let gap = n_prime - n;
    Ok(move |x: &Point| {
        let frame = m.frame(&x.coords);
        let mut q = potential.hessian_frame(m, &x.coords, &frame);
        for i in 0..m.dim {
            q[(i, i)] += ric;
        }
        if gap > 0.0 && gap.is_finite() {
            let g = m.to_frame(&frame, &potential.gradient(m, &x.coords));
            q -= &g * g.transpose() / gap;
        }
        0.5 * s * sym_eigen(&q).0[0]
    })
}

/// `Γ(f)` and `Γ₂(f)` computed with the operator's matrix.
pub fn gamma_operators(opr: &DiscretizedOperator, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let gamma_pair = |a: &[f64], b: &[f64]| -> Vec<f64> {
        let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
        let lab = opr.apply(&ab);
        let la = opr.apply(a);
        let lb = opr.apply(b);
        (0..a.len()).map(|j| 0.5 * (lab[j] - a[j] * lb[j] - b[j] * la[j])).collect()
    };
    let gamma = gamma_pair(f, f);
    let lf = opr.apply(f);
    let l_gamma = opr.apply(&gamma);
    let cross = gamma_pair(f, &lf);
    let gamma2 = (0..f.len()).map(|j| 0.5 * l_gamma[j] - cross[j]).collect();
    (gamma, gamma2)
}

/// Worst violation of `Γ₂ ≥ ρΓ + (Lf)²/n′` relative to `max(1, |Γ₂|)`,
/// over nodes at least `POLE_CELLS` away from the ends of a zonal grid.
pub fn cd_violation(opr: &DiscretizedOperator, f: &[f64], rho: &[f64], n_prime: f64) -> f64 {
    let (gamma, gamma2) = gamma_operators(opr, f);
    let lf = opr.apply(f);
    let m = opr.size();
    let (lo, hi) = match opr.kind {
        GridKind::Zonal => (POLE_CELLS, m - POLE_CELLS),
        GridKind::Circle => (0, m),
    };
    let inv = if n_prime.is_infinite() { 0.0 } else { 1.0 / n_prime };
    (lo..hi)
        .map(|j| {
            let rhs = rho[j] * gamma[j] + inv * lf[j] * lf[j];
            (rhs - gamma2[j]) / gamma2[j].abs().max(1.0)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Outcome of the gradient-norm derivative identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResidual {
    pub sup_residual: f64,
    pub nodes_used: usize,
}

const IDENTITY_TAU: f64 = 1e-6;

fn semigroup_action(opr: &DiscretizedOperator, f: &[f64], tau: f64) -> Vec<f64> {
    let mut out = f.to_vec();
    let mut term = f.to_vec();
    let size = f.iter().fold(0.0_f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    for k in 1..200 {
        term = opr.apply(&term).into_iter().map(|v| v * tau / k as f64).collect();
        let mut big = 0.0_f64;
        for (o, t) in out.iter_mut().zip(&term) {
            *o += t;
            big = big.max(t.abs());
        }
        if big < 1e-18 * size {
            break;
        }
    }
    out
}

/// Compares the time derivative at 0 of `|∇P^t f|²` (semigroup on the grid,
/// central differences in space) with the closed form
/// `h(2Lh + a′h′) + 2h²F′`, `h = |f′|`, `F = ½a′ − ½aφ′`, on a circle grid.
/// `f` returns `f` and its first three θ derivatives.
pub fn lipschitz_derivative_identity_check(
    opr: &DiscretizedOperator,
    f: &dyn Fn(f64) -> [f64; 4],
) -> Result<IdentityResidual> {
    if opr.kind != GridKind::Circle {
        return Err(Error::InvalidInput("the derivative identity check runs on a circle grid".into()));
    }
    let m = opr.size();
    let r = opr.radius;
    let h = opr.step;
    let values: Vec<f64> = opr.nodes.iter().map(|&t| f(t)[0]).collect();
    let grad_sq = |v: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|j| {
                let g = (v[(j + 1) % m] - v[(j + m - 1) % m]) / (2.0 * r * h);
                g * g
            })
            .collect()
    };
    let g0 = grad_sq(&values);
    let g1 = grad_sq(&semigroup_action(opr, &values, IDENTITY_TAU));
    let g2 = grad_sq(&semigroup_action(opr, &values, 2.0 * IDENTITY_TAU));
    let mut worst = 0.0_f64;
    let mut used = 0;
    for j in 0..m {
        let t = opr.nodes[j];
        let [_, f1, f2, f3] = f(t);
        let (fx, fxx, fxxx) = (f1 / r, f2 / (r * r), f3 / (r * r * r));
        if fx.abs() < CRITICAL_GRADIENT {
            continue;
        }
        let (a, a1, a2) = (opr.profile)(t);
        let (_, p1, p2) = opr.potential.theta_jet(t);
        let (ax, axx) = (a1 / r, a2 / (r * r));
        let (px, pxx) = (p1 / r, p2 / (r * r));
        let drift = 0.5 * ax - 0.5 * a * px;
        let drift_x = 0.5 * axx - 0.5 * (ax * px + a * pxx);
        let sign = fx.signum();
        let (hh, hx, hxx) = (fx.abs(), sign * fxx, sign * fxxx);
        let lh = 0.5 * a * hxx + drift * hx;
        let rhs = hh * (2.0 * lh + ax * hx) + 2.0 * hh * hh * drift_x;
        let lhs = (-3.0 * g0[j] + 4.0 * g1[j] - g2[j]) / (2.0 * IDENTITY_TAU);
        worst = worst.max((lhs - rhs).abs());
        used += 1;
    }
    Ok(IdentityResidual { sup_residual: worst, nodes_used: used })
}

/// Curvature field `inf_u κ(x,u)` on the grid nodes.
pub fn kappa_field(spec: &DiffusionSpec, opr: &DiscretizedOperator) -> Result<Vec<f64>> {
    (0..opr.size()).map(|j| kappa_min(spec, &opr.point(j))).collect()
}

/// One `CD(ρ, n′)` bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdBound {
    pub n_prime: f64,
    pub best_c: f64,
    pub value: f64,
}

/// Spectral gap and every applicable lower bound, all for the generator
/// `L = (s/2)(Δ − ∇φ·∇)`.
#[derive(Debug, Clone)]
pub struct BoundsReport {
    /// Gap extrapolated from grids `m` and `2m`.
    pub lambda1: f64,
    /// Gap on the finer grid `2m`.
    pub lambda1_grid: f64,
    pub grid: usize,
    /// Lichnerowicz bound scaled to `L` (no potential, `n ≥ 2` only).
    pub lichnerowicz: Option<f64>,
    /// Chen–Wang bounds scaled to `L` (no potential only).
    pub chen_wang: Vec<(ChenWangBranch, f64)>,
    pub harmonic_mean: Option<f64>,
    /// `(best c, value)`.
    pub interpolated: Option<(f64, f64)>,
    pub bakry_emery_cd: Vec<CdBound>,
    pub diameter: f64,
    /// Lower Ricci bound of the manifold.
    pub ricci_lower: f64,
    /// Infimum of the curvature field `κ(x)` on the grid.
    pub kappa_inf: f64,
}

impl BoundsReport {
    /// Every bound with a label.
    pub fn bounds(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        if let Some(v) = self.lichnerowicz {
            out.push(("lichnerowicz".to_string(), v));
        }
        for (b, v) in &self.chen_wang {
            out.push((b.to_string(), *v));
        }
        if let Some(v) = self.harmonic_mean {
            out.push(("harmonic_mean".to_string(), v));
        }
        if let Some((_, v)) = self.interpolated {
            out.push(("interpolated".to_string(), v));
        }
        for cd in &self.bakry_emery_cd {
            out.push((format!("cd_nprime_{}", cd.n_prime), cd.value));
        }
        out
    }
}

/// Evaluates `λ₁` and all bounds for a reversible problem on the grid of
/// size `m`, with curvature-dimension bounds for every `n′` in `n_primes`
/// that is admissible.
pub fn bounds_report(spec: &DiffusionSpec, m: usize, n_primes: &[f64]) -> Result<BoundsReport> {
    let (s, potential) = reversible_parts(spec)?;
    let man = &spec.manifold;
    let n = man.dim;
    let (lambda1, lambda1_grid) = spectral_gap_extrapolated(spec, m)?;
    let opr = discretize(spec, m)?;
    let ric = man.curvature() * (n as f64 - 1.0);
    let diameter = man.diameter();
    let flat = potential.is_zero();
    let half = 0.5 * s;
    let lichnerowicz = if flat && n >= 2 { Some(half * lichnerowicz_bound(n, ric)?) } else { None };
    let chen_wang = if flat {
        chen_wang_bounds(n, ric, diameter)?.into_iter().map(|(b, v)| (b, half * v)).collect()
    } else {
        vec![]
    };
    let kappa = kappa_field(spec, &opr)?;
    let weights = &opr.measure_weights;
    let kappa_inf = kappa.iter().copied().fold(f64::INFINITY, f64::min);
    let harmonic_mean = harmonic_mean_bound(&kappa, weights).ok();
    let interpolated = if n >= 2 { interpolated_bound(&kappa, weights, n).ok() } else { None };
    let mut bakry_emery_cd = Vec::new();
    for &np in n_primes {
        let Ok(rho_fn) = bakry_emery_rho(spec, np) else { continue };
        if np <= 1.0 {
            continue;
        }
        let rho: Vec<f64> = (0..opr.size()).map(|j| rho_fn(&opr.point(j))).collect();
        if let Ok((best_c, value)) = cd_bound(&rho, weights, np) {
            bakry_emery_cd.push(CdBound { n_prime: np, best_c, value });
        }
    }
    Ok(BoundsReport {
        lambda1,
        lambda1_grid,
        grid: m,
        lichnerowicz,
        chen_wang,
        harmonic_mean,
        interpolated,
        bakry_emery_cd,
        diameter,
        ricci_lower: ric,
        kappa_inf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sturm_bisection_matches_dense() {
        let d = [2.0, 3.0, 1.0, 4.0, 2.5];
        let off = [0.5, -1.0, 0.3, 0.7];
        let mut m = DMatrix::zeros(5, 5);
        for j in 0..5 {
            m[(j, j)] = d[j];
            if j < 4 {
                m[(j, j + 1)] = off[j];
                m[(j + 1, j)] = off[j];
            }
        }
        let dense = sym_eigen(&m).0;
        for k in 0..5 {
            assert!((tridiagonal_eigenvalue(&d, &off, k) - dense[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn chen_wang_branches_agree_at_zero_curvature() {
        let b = chen_wang_bounds(3, 0.0, 2.0).unwrap();
        let v: Vec<f64> = b.iter().map(|x| x.1).collect();
        let base = PI * PI / 4.0;
        assert_eq!(b.len(), 3);
        for x in v {
            assert!((x - base).abs() < 1e-14);
        }
    }

    #[test]
    fn lichnerowicz_examples() {
        assert_eq!(lichnerowicz_bound(2, 1.0).unwrap(), 2.0);
        assert_eq!(lichnerowicz_bound(3, 2.0).unwrap(), 3.0);
        assert_eq!(lichnerowicz_bound(2, 0.0).unwrap(), 0.0);
        assert_eq!(lichnerowicz_bound(1, 1.0), Err(Error::DimensionOne));
    }
}
