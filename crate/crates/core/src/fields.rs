//! Diffusion tensor fields, drift fields and potentials on the model spaces.
//!
//! Generator convention: `L = ½ A^{ij} ∇²_{ij} + F^i ∇_i`. Tensor-valued
//! quantities are returned in the coordinates of a caller-supplied orthonormal
//! frame at the base point (ambient columns), in which the metric is the
//! identity.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, symmetrize};
use crate::manifold::{ManifoldKind, ModelManifold};
use crate::rng;

/// Step of the central differences used for black-box fields.
pub const FD_STEP: f64 = 1e-5;

pub type AmbientMatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type AmbientVectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// A 4-tensor on the ambient space with the algebraic symmetries of a
/// Riemann tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RiemannLikeTensor {
    dim: usize,
    data: Vec<f64>,
}

impl RiemannLikeTensor {
    pub fn zero(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim.pow(4)] }
    }

    /// Validates `data` (row-major `T[i][j][k][l]`).
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim.pow(4) {
            return Err(Error::DimensionMismatch(format!("expected {} entries, got {}", dim.pow(4), data.len())));
        }
        let t = Self { dim, data };
        let res = t.symmetry_residual();
        let scale = t.data.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        if res > 1e-12 * scale {
            return Err(Error::InvalidInput(format!("tensor lacks curvature symmetries (residual {res:e})")));
        }
        Ok(t)
    }

    /// Kulkarni–Nomizu product of two symmetric matrices:
    /// `(h ⊙ k)_{ijkl} = h_ik k_jl + h_jl k_ik − h_il k_jk − h_jk k_il`.
    pub fn kulkarni_nomizu(h: &DMatrix<f64>, k: &DMatrix<f64>) -> Self {
        let n = h.nrows();
        let h = symmetrize(h);
        let k = symmetrize(k);
        let mut t = Self::zero(n);
        for i in 0..n {
            for j in 0..n {
                for a in 0..n {
                    for b in 0..n {
                        let v = h[(i, a)] * k[(j, b)] + h[(j, b)] * k[(i, a)]
                            - h[(i, b)] * k[(j, a)]
                            - h[(j, a)] * k[(i, b)];
                        t.set(i, j, a, b, v);
                    }
                }
            }
        }
        t
    }

    /// `Σ_m h_m ⊙ h_m` for `terms` random positive semidefinite `h_m`; the
    /// induced diffusion field is positive semidefinite on all three model
    /// spaces.
    pub fn random_nonnegative(dim: usize, terms: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, &[0x7e45]);
        let mut t = Self::zero(dim);
        for _ in 0..terms {
            let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let h = &g * g.transpose() / dim as f64;
            t = t.add(&Self::kulkarni_nomizu(&h, &h));
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.dim + j) * self.dim + k) * self.dim + l
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[self.idx(i, j, k, l)]
    }

    fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let p = self.idx(i, j, k, l);
        self.data[p] = v;
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self { dim: self.dim, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|a| a * s).collect() }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `T(x, v, y, w) = T_ijkl x^i v^j y^k w^l`.
    pub fn contract(&self, x: &DVector<f64>, v: &DVector<f64>, y: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let n = self.dim;
        let mut s = 0.0;
        for i in 0..n {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                if v[j] == 0.0 {
                    continue;
                }
                for k in 0..n {
                    let base = self.idx(i, j, k, 0);
                    let mut inner = 0.0;
                    for l in 0..n {
                        inner += self.data[base + l] * w[l];
                    }
                    s += x[i] * v[j] * y[k] * inner;
                }
            }
        }
        s
    }

    /// Matrix `M_jl = T_ijkl x^i y^k`.
    pub fn partial(&self, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for k in 0..n {
                let c = x[i] * y[k];
                if c == 0.0 {
                    continue;
                }
                for j in 0..n {
                    for l in 0..n {
                        m[(j, l)] += c * self.get(i, j, k, l);
                    }
                }
            }
        }
        m
    }

    /// Largest violation of the antisymmetries, pair symmetry and first
    /// Bianchi identity.
    pub fn symmetry_residual(&self) -> f64 {
        let n = self.dim;
        let mut r = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let t = self.get(i, j, k, l);
                        r = r.max((t + self.get(j, i, k, l)).abs());
                        r = r.max((t + self.get(i, j, l, k)).abs());
                        r = r.max((t - self.get(k, l, i, j)).abs());
                        r = r.max((t + self.get(j, k, i, l) + self.get(k, i, j, l)).abs());
                    }
                }
            }
        }
        r
    }
}

/// Scalar potential `φ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// `φ = Σ_k c_k cos^k θ` on a sphere, with `cos θ = x_{n+1}/r`.
    Zonal(Vec<f64>),
    /// `φ = c |x|²` on Euclidean space.
    Quadratic(f64),
}

fn poly(coeffs: &[f64], c: f64) -> (f64, f64, f64) {
    let (mut p, mut dp, mut ddp) = (0.0, 0.0, 0.0);
    for &a in coeffs.iter().rev() {
        ddp = ddp * c + 2.0 * dp;
        dp = dp * c + p;
        p = p * c + a;
    }
    (p, dp, ddp)
}

impl Potential {
    pub fn zero() -> Self {
        Potential::Zonal(vec![])
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Potential::Zonal(c) => c.iter().all(|&a| a == 0.0),
            Potential::Quadratic(c) => *c == 0.0,
        }
    }

    fn check(&self, m: &ModelManifold) -> Result<()> {
        match (self, m.kind) {
            (Potential::Zonal(_), ManifoldKind::Sphere) | (Potential::Quadratic(_), ManifoldKind::Euclidean) => Ok(()),
            _ if self.is_zero() => Ok(()),
            _ => Err(Error::InvalidInput(format!("potential {self} is not defined on {m}"))),
        }
    }

    pub fn value(&self, m: &ModelManifold, x: &DVector<f64>) -> f64 {
        match self {
            Potential::Zonal(c) => {
                if c.is_empty() {
                    return 0.0;
                }
                poly(c, x[m.dim] / m.radius).0
            }
            Potential::Quadratic(c) => c * x.norm_squared(),
        }
    }

    /// Riemannian gradient as an ambient tangent vector.
    pub fn gradient(&self, m: &ModelManifold, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Potential::Zonal(c) => {
                if c.is_empty() {
                    return DVector::zeros(x.len());
                }
                let r = m.radius;
                let (_, dp, _) = poly(c, x[m.dim] / r);
                let mut e = -x * (x[m.dim] / (r * r));
                e[m.dim] += 1.0;
                e * (dp / r)
            }
            Potential::Quadratic(c) => x * (2.0 * c),
        }
    }

    /// Riemannian Hessian in the orthonormal frame `frame` at `x`.
    pub fn hessian_frame(&self, m: &ModelManifold, x: &DVector<f64>, frame: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.dim;
        match self {
            Potential::Zonal(c) => {
                if c.is_empty() {
                    return DMatrix::zeros(n, n);
                }
                let r = m.radius;
                let cz = x[n] / r;
                let (_, dp, ddp) = poly(c, cz);
                let last = frame.row(n).transpose();
                &last * last.transpose() * (ddp / (r * r)) - DMatrix::identity(n, n) * (dp * cz / (r * r))
            }
            Potential::Quadratic(c) => DMatrix::identity(n, n) * (2.0 * c),
        }
    }

    /// `φ`, `dφ/dθ`, `d²φ/dθ²` as functions of the colatitude θ (zonal
    /// potentials only; zero otherwise).
    pub fn theta_jet(&self, theta: f64) -> (f64, f64, f64) {
        match self {
            Potential::Zonal(c) if !c.is_empty() => {
                let (s, co) = theta.sin_cos();
                let (p, dp, ddp) = poly(c, co);
                (p, -s * dp, s * s * ddp - co * dp)
            }
            _ => (0.0, 0.0, 0.0),
        }
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Zonal(c) => {
                if c.iter().all(|&a| a == 0.0) {
                    return write!(f, "0");
                }
                let terms: Vec<String> = c
                    .iter()
                    .enumerate()
                    .filter(|(_, &a)| a != 0.0)
                    .map(|(k, a)| match k {
                        0 => format!("{a}"),
                        1 => format!("{a}*cos"),
                        _ => format!("{a}*cos^{k}"),
                    })
                    .collect();
                write!(f, "{}", terms.join("+"))
            }
            Potential::Quadratic(c) => write!(f, "{c}*r^2"),
        }
    }
}

/// Diffusion tensor field `A`.
#[derive(Clone)]
pub enum DiffusionField {
    /// `A = s g⁻¹`.
    Metric(f64),
    /// `A = (a₀ + ⟨c, x⟩) g⁻¹` with `c` an ambient covector.
    Conformal {
        base: f64,
        slope: DVector<f64>,
    },
    /// Field with `A(x)(g⁻¹v)^{⊗2} = T(x, v, x, v)` in ambient coordinates
    /// (Euclidean points are embedded as `(x, 1)`).
    Example(RiemannLikeTensor),
    Sum(Vec<DiffusionField>),
    /// Black-box field returning the ambient contravariant tensor.
    Custom(AmbientMatrixFn),
}

impl fmt::Debug for DiffusionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiffusionField::Metric(s) => write!(f, "Metric({s})"),
            DiffusionField::Conformal { base, slope } => write!(f, "Conformal({base}, {:?})", slope.as_slice()),
            DiffusionField::Example(t) => write!(f, "Example(dim {})", t.dim()),
            DiffusionField::Sum(v) => f.debug_list().entries(v).finish(),
            DiffusionField::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Drift vector field `F`.
#[derive(Clone)]
pub enum DriftField {
    Zero,
    /// `F(x) = −k x` on Euclidean space.
    Linear(f64),
    /// `F = −(s/2) ∇φ`.
    Gradient {
        potential: Potential,
        scale: f64,
    },
    /// Black-box field returning an ambient tangent vector.
    Custom(AmbientVectorFn),
}

impl fmt::Debug for DriftField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftField::Zero => write!(f, "Zero"),
            DriftField::Linear(k) => write!(f, "Linear({k})"),
            DriftField::Gradient { potential, scale } => write!(f, "Gradient({potential}, {scale})"),
            DriftField::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Ambient coordinates used by tensor contractions (Euclidean points and
/// vectors are lifted to the hyperplane `x_{n+1} = 1`).
fn lift(m: &ModelManifold, v: &DVector<f64>, is_point: bool) -> DVector<f64> {
    if m.kind == ManifoldKind::Euclidean {
        let n = v.len();
        let mut out = DVector::zeros(n + 1);
        out.rows_mut(0, n).copy_from(v);
        out[n] = if is_point { 1.0 } else { 0.0 };
        out
    } else {
        v.clone()
    }
}

fn lift_frame(m: &ModelManifold, frame: &DMatrix<f64>) -> DMatrix<f64> {
    if m.kind == ManifoldKind::Euclidean {
        let (r, c) = frame.shape();
        let mut out = DMatrix::zeros(r + 1, c);
        out.view_mut((0, 0), (r, c)).copy_from(frame);
        out
    } else {
        frame.clone()
    }
}

/// Metric-lowered frame `G E`, so that `(GE)ᵀ A_amb (GE)` gives frame
/// components of a contravariant ambient tensor.
fn lowered(m: &ModelManifold, frame: &DMatrix<f64>) -> DMatrix<f64> {
    let mut ge = frame.clone();
    if m.kind == ManifoldKind::Hyperbolic {
        ge.row_mut(m.dim).neg_mut();
    }
    ge
}

impl DiffusionField {
    /// Components in the orthonormal frame `frame` at `x`.
    pub fn frame_matrix(&self, m: &ModelManifold, x: &DVector<f64>, frame: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.dim;
        match self {
            DiffusionField::Metric(s) => DMatrix::identity(n, n) * *s,
            DiffusionField::Conformal { base, slope } => DMatrix::identity(n, n) * (base + slope.dot(x)),
            DiffusionField::Example(t) => {
                let xl = lift(m, x, true);
                let e = lift_frame(m, frame);
                let p = t.partial(&xl, &xl);
                symmetrize(&(e.transpose() * p * e))
            }
            DiffusionField::Sum(fs) => fs.iter().fold(DMatrix::zeros(n, n), |acc, f| acc + f.frame_matrix(m, x, frame)),
            DiffusionField::Custom(f) => {
                let ge = lowered(m, frame);
                symmetrize(&(ge.transpose() * f(x) * ge))
            }
        }
    }

    /// Covariant derivative `∇_u A` at `x`, in the orthonormal frame `frame`.
    pub fn covariant_derivative(
        &self,
        m: &ModelManifold,
        x: &DVector<f64>,
        u: &DVector<f64>,
        frame: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        let n = m.dim;
        match self {
            DiffusionField::Metric(_) => DMatrix::zeros(n, n),
            DiffusionField::Conformal { slope, .. } => DMatrix::identity(n, n) * slope.dot(u),
            DiffusionField::Example(t) => {
                let xl = lift(m, x, true);
                let ul = lift(m, u, false);
                let e = lift_frame(m, frame);
                let p = t.partial(&ul, &xl) + t.partial(&xl, &ul);
                symmetrize(&(e.transpose() * p * e))
            }
            DiffusionField::Sum(fs) => {
                fs.iter().fold(DMatrix::zeros(n, n), |acc, f| acc + f.covariant_derivative(m, x, u, frame))
            }
            DiffusionField::Custom(_) => self.covariant_derivative_numeric(m, x, u, frame, FD_STEP),
        }
    }

    /// Central difference of the frame components along the geodesic in
    /// direction `u`, using the parallel-transported frame.
    pub fn covariant_derivative_numeric(
        &self,
        m: &ModelManifold,
        x: &DVector<f64>,
        u: &DVector<f64>,
        frame: &DMatrix<f64>,
        step: f64,
    ) -> DMatrix<f64> {
        let at = |h: f64| {
            let v = u * h;
            let y = m.project_point(m.exp_raw(x, &v)).coords;
            let fy = m.transport_frame(x, &v, frame);
            self.frame_matrix(m, &y, &fy)
        };
        (at(step) - at(-step)) / (2.0 * step)
    }

    pub fn is_metric(&self) -> Option<f64> {
        match self {
            DiffusionField::Metric(s) => Some(*s),
            _ => None,
        }
    }
}

impl DriftField {
    /// Ambient tangent vector at `x`.
    pub fn ambient(&self, m: &ModelManifold, x: &DVector<f64>) -> DVector<f64> {
        match self {
            DriftField::Zero => DVector::zeros(x.len()),
            DriftField::Linear(k) => -x * *k,
            DriftField::Gradient { potential, scale } => potential.gradient(m, x) * (-0.5 * scale),
            DriftField::Custom(f) => m.project_tangent(&m.project_point(x.clone()), &f(x)).components,
        }
    }

    pub fn frame_vector(&self, m: &ModelManifold, x: &DVector<f64>, frame: &DMatrix<f64>) -> DVector<f64> {
        match self {
            DriftField::Zero => DVector::zeros(m.dim),
            _ => m.to_frame(frame, &self.ambient(m, x)),
        }
    }

    /// Matrix `J` with `J u_f = (∇_u F)_f` in the frame at `x`.
    pub fn jacobian_frame(&self, m: &ModelManifold, x: &DVector<f64>, frame: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.dim;
        match self {
            DriftField::Zero => DMatrix::zeros(n, n),
            DriftField::Linear(k) => DMatrix::identity(n, n) * (-k),
            DriftField::Gradient { potential, scale } => potential.hessian_frame(m, x, frame) * (-0.5 * scale),
            DriftField::Custom(_) => {
                let mut j = DMatrix::zeros(n, n);
                for a in 0..n {
                    let u = frame.column(a).into_owned();
                    j.set_column(a, &self.covariant_derivative_numeric(m, x, &u, frame, FD_STEP));
                }
                j
            }
        }
    }

    /// `∇_u F` in the frame at `x`.
    pub fn covariant_derivative(
        &self,
        m: &ModelManifold,
        x: &DVector<f64>,
        u: &DVector<f64>,
        frame: &DMatrix<f64>,
    ) -> DVector<f64> {
        match self {
            DriftField::Custom(_) => self.covariant_derivative_numeric(m, x, u, frame, FD_STEP),
            _ => self.jacobian_frame(m, x, frame) * m.to_frame(frame, u),
        }
    }

    pub fn covariant_derivative_numeric(
        &self,
        m: &ModelManifold,
        x: &DVector<f64>,
        u: &DVector<f64>,
        frame: &DMatrix<f64>,
        step: f64,
    ) -> DVector<f64> {
        let at = |h: f64| {
            let v = u * h;
            let y = m.project_point(m.exp_raw(x, &v)).coords;
            let fy = m.transport_frame(x, &v, frame);
            self.frame_vector(m, &y, &fy)
        };
        (at(step) - at(-step)) / (2.0 * step)
    }

    /// Linear drift rate, when the drift is `−k x`.
    pub fn linear_rate(&self) -> Option<f64> {
        match self {
            DriftField::Linear(k) => Some(*k),
            _ => None,
        }
    }
}

/// A diffusion `L = ½ A^{ij} ∇²_{ij} + F^i ∇_i` on a model space, optionally
/// in reversible form `A = s g⁻¹`, `F = −(s/2) ∇φ`.
#[derive(Clone, Debug)]
pub struct DiffusionSpec {
    pub manifold: ModelManifold,
    pub diffusion: DiffusionField,
    pub drift: DriftField,
    pub potential: Option<Potential>,
}

impl DiffusionSpec {
    pub fn new(manifold: ModelManifold, diffusion: DiffusionField, drift: DriftField) -> Result<Self> {
        if let (DriftField::Linear(_), k) = (&drift, manifold.kind) {
            if k != ManifoldKind::Euclidean {
                return Err(Error::InvalidInput("linear drift needs Euclidean space".into()));
            }
        }
        if let DriftField::Gradient { potential, .. } = &drift {
            potential.check(&manifold)?;
        }
        Ok(Self { manifold, diffusion, drift, potential: None })
    }

    /// Brownian motion with generator `½ Δ`.
    pub fn brownian(manifold: ModelManifold) -> Self {
        Self { manifold, diffusion: DiffusionField::Metric(1.0), drift: DriftField::Zero, potential: None }
    }

    /// Ornstein–Uhlenbeck process `L = ½ Δ − k x·∇` on Euclidean space.
    pub fn ornstein_uhlenbeck(manifold: ModelManifold, rate: f64) -> Result<Self> {
        Self::new(manifold, DiffusionField::Metric(1.0), DriftField::Linear(rate))
    }

    /// `L = (s/2)(Δ − ∇φ·∇)`, reversible for `e^{−φ} dvol`.
    pub fn reversible(manifold: ModelManifold, scale: f64, potential: Potential) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::InvalidInput("diffusion scale must be positive".into()));
        }
        potential.check(&manifold)?;
        Ok(Self {
            manifold,
            diffusion: DiffusionField::Metric(scale),
            drift: DriftField::Gradient { potential: potential.clone(), scale },
            potential: Some(potential),
        })
    }

    pub fn a_frame(&self, x: &DVector<f64>, frame: &DMatrix<f64>) -> DMatrix<f64> {
        self.diffusion.frame_matrix(&self.manifold, x, frame)
    }

    pub fn f_frame(&self, x: &DVector<f64>, frame: &DMatrix<f64>) -> DVector<f64> {
        self.drift.frame_vector(&self.manifold, x, frame)
    }
}

/// Outcome of building a condition-(H) field from a curvature-like tensor.
#[derive(Debug, Clone)]
pub struct AdmissibleField {
    pub field: DiffusionField,
    /// Smallest eigenvalue of `A` over the sampled points.
    pub min_eigenvalue: f64,
    /// Set when `A` fails to be positive semidefinite at some sampled point.
    pub non_psd_warning: bool,
}

/// Random point of the manifold (uniform on spheres; Gaussian-distributed
/// tangent coordinates at the pole otherwise).
pub fn random_point<R: Rng>(m: &ModelManifold, spread: f64, rng: &mut R) -> DVector<f64> {
    let g = DVector::from_fn(m.ambient_dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
    match m.kind {
        ManifoldKind::Euclidean => g * spread,
        ManifoldKind::Sphere => &g * (m.radius / g.norm()),
        ManifoldKind::Hyperbolic => {
            let pole = m.pole().coords;
            let e = m.frame(&pole);
            let v = e * g.rows(0, m.dim) * spread;
            m.project_point(m.exp_raw(&pole, &v)).coords
        }
    }
}

/// Unit tangent vector at `x` with uniformly random direction.
pub fn random_unit_tangent<R: Rng>(m: &ModelManifold, x: &DVector<f64>, rng: &mut R) -> DVector<f64> {
    let c = DVector::from_fn(m.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let c = &c / c.norm();
    m.frame(x) * c
}

/// The field `A(x)(g⁻¹v)^{⊗2} = T(x, v, x, v)`, with a positive
/// semidefiniteness scan over `samples` random points.
pub fn h_admissible_field(
    m: &ModelManifold,
    t: &RiemannLikeTensor,
    samples: usize,
    seed: u64,
) -> Result<AdmissibleField> {
    let expected = m.ambient_dim() + usize::from(m.kind == ManifoldKind::Euclidean);
    if t.dim() != expected {
        return Err(Error::DimensionMismatch(format!("tensor dimension {} but manifold needs {expected}", t.dim())));
    }
    let field = DiffusionField::Example(t.clone());
    let mut lo = f64::INFINITY;
    for i in 0..samples {
        let mut rng = rng::stream(seed, &[i as u64]);
        let x = random_point(m, 1.0, &mut rng);
        let e = m.frame(&x);
        lo = lo.min(min_eigenvalue(&field.frame_matrix(m, &x, &e)));
    }
    let scale = t.data().iter().fold(0.0_f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    Ok(AdmissibleField { field, min_eigenvalue: lo, non_psd_warning: lo < -1e-12 * scale })
}
