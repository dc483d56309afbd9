//! Exact geometry of the three model spaces in ambient coordinates.
//!
//! * Euclidean space ℝⁿ with the standard inner product.
//! * The sphere Sⁿ(r) = {x ∈ ℝⁿ⁺¹ : ⟨x,x⟩ = r²}.
//! * The hyperboloid Hⁿ(r) = {x ∈ ℝⁿ⁺¹ : q(x,x) = −r², x_{n+1} > 0} with
//!   q(x,y) = Σ_{i≤n} x_i y_i − x_{n+1} y_{n+1}.
//!
//! Tangent vectors are ambient vectors. Matrix-valued quantities (jets,
//! diffusion tensors) are expressed in metric-orthonormal frames, stored as
//! ambient matrices whose columns are the frame vectors, so the metric is the
//! identity in frame coordinates.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::householder_to;

/// Margin below πr beyond which sphere pairs count as cut-locus pairs.
pub const CUT_MARGIN: f64 = 1e-6;

const POINT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifoldKind {
    Euclidean,
    Sphere,
    Hyperbolic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelManifold {
    pub kind: ManifoldKind,
    pub dim: usize,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub coords: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: Point,
    pub components: DVector<f64>,
}

/// Second-order jet of `(v, w) ↦ d(exp_x εv, exp_y εw)`, divided by `d`:
///
/// d(exp_x εv, exp_y εw) = d [1 + ε(l1·v + l2·w) + ε²/2 (q1(v,v) + q2(w,w) + 2 q12(v,w))] + o(ε²)
///
/// Vectors and forms are in the frames `frame_x` (at x) and `frame_y` (at y).
/// `frame_x` has `u_xy` as its first vector and `frame_y` is its parallel
/// transport, so `u_xy = e₁` and `u_yx = −e₁` in coordinates.
#[derive(Debug, Clone)]
pub struct DistanceJet {
    pub d: f64,
    pub l1: DVector<f64>,
    pub l2: DVector<f64>,
    pub q1: DMatrix<f64>,
    pub q2: DMatrix<f64>,
    pub q12: DMatrix<f64>,
    pub u_xy: DVector<f64>,
    pub u_yx: DVector<f64>,
    pub frame_x: DMatrix<f64>,
    pub frame_y: DMatrix<f64>,
}

fn sinc(t: f64) -> f64 {
    if t.abs() < 1e-6 {
        1.0 - t * t / 6.0
    } else {
        t.sin() / t
    }
}

fn sinhc(t: f64) -> f64 {
    if t.abs() < 1e-6 {
        1.0 + t * t / 6.0
    } else {
        t.sinh() / t
    }
}

impl ModelManifold {
    pub fn new(kind: ManifoldKind, dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
        }
        Ok(Self { kind, dim, radius })
    }

    pub fn euclidean(dim: usize) -> Self {
        Self::new(ManifoldKind::Euclidean, dim, 1.0).expect("valid dimension")
    }

    pub fn sphere(dim: usize, radius: f64) -> Self {
        Self::new(ManifoldKind::Sphere, dim, radius).expect("valid sphere")
    }

    pub fn hyperbolic(dim: usize, radius: f64) -> Self {
        Self::new(ManifoldKind::Hyperbolic, dim, radius).expect("valid hyperbolic space")
    }

    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Euclidean => self.dim,
            _ => self.dim + 1,
        }
    }

    /// Constant sectional curvature.
    pub fn curvature(&self) -> f64 {
        match self.kind {
            ManifoldKind::Euclidean => 0.0,
            ManifoldKind::Sphere => 1.0 / (self.radius * self.radius),
            ManifoldKind::Hyperbolic => -1.0 / (self.radius * self.radius),
        }
    }

    /// Largest distance accepted by `log_map`, transport and jets.
    pub fn cut_limit(&self) -> f64 {
        match self.kind {
            ManifoldKind::Sphere => std::f64::consts::PI * self.radius - CUT_MARGIN,
            _ => f64::INFINITY,
        }
    }

    /// Diameter (infinite for non-compact spaces).
    pub fn diameter(&self) -> f64 {
        match self.kind {
            ManifoldKind::Sphere => std::f64::consts::PI * self.radius,
            _ => f64::INFINITY,
        }
    }

    /// Ambient bilinear form: dot product, or q on the hyperboloid.
    pub fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        match self.kind {
            ManifoldKind::Hyperbolic => {
                let n = self.dim;
                a.rows(0, n).dot(&b.rows(0, n)) - a[n] * b[n]
            }
            _ => a.dot(b),
        }
    }

    /// Ambient Gram matrix of [`Self::inner`].
    pub fn ambient_metric(&self) -> DMatrix<f64> {
        let mut g = DMatrix::identity(self.ambient_dim(), self.ambient_dim());
        if self.kind == ManifoldKind::Hyperbolic {
            g[(self.dim, self.dim)] = -1.0;
        }
        g
    }

    pub fn norm(&self, v: &DVector<f64>) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }

    /// Validates ambient coordinates as a point of the manifold.
    pub fn point(&self, coords: DVector<f64>) -> Result<Point> {
        if coords.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch(format!(
                "point has {} coordinates, expected {}",
                coords.len(),
                self.ambient_dim()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        let r2 = self.radius * self.radius;
        match self.kind {
            ManifoldKind::Euclidean => {}
            ManifoldKind::Sphere => {
                let err = (coords.dot(&coords) - r2).abs() / r2;
                if err > POINT_TOL {
                    return Err(Error::InvalidInput(format!("point off the sphere (relative error {err:e})")));
                }
            }
            ManifoldKind::Hyperbolic => {
                // Relative to the coordinate scale: q(x,x) cancels between
                // terms of size |x|² far from the pole.
                let err = (self.inner(&coords, &coords) + r2).abs() / coords.norm_squared().max(r2);
                if err > POINT_TOL || coords[self.dim] <= 0.0 {
                    return Err(Error::InvalidInput(format!("point off the hyperboloid (relative error {err:e})")));
                }
            }
        }
        Ok(Point { coords })
    }

    /// Projects ambient coordinates onto the manifold.
    pub fn project_point(&self, coords: DVector<f64>) -> Point {
        let coords = match self.kind {
            ManifoldKind::Euclidean => coords,
            ManifoldKind::Sphere => {
                let n = coords.norm();
                coords * (self.radius / n)
            }
            ManifoldKind::Hyperbolic => {
                let n = self.dim;
                let s2 = coords.rows(0, n).norm_squared();
                let mut c = coords;
                c[n] = (s2 + self.radius * self.radius).sqrt();
                c
            }
        };
        Point { coords }
    }

    /// The point with all coordinates zero except the last one equal to r
    /// (the origin for Euclidean space).
    pub fn pole(&self) -> Point {
        let mut c = DVector::zeros(self.ambient_dim());
        if self.kind != ManifoldKind::Euclidean {
            c[self.dim] = self.radius;
        }
        Point { coords: c }
    }

    /// Validates a tangent vector at `x`.
    pub fn tangent(&self, x: &Point, components: DVector<f64>) -> Result<TangentVector> {
        if components.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch(format!(
                "tangent vector has {} components, expected {}",
                components.len(),
                self.ambient_dim()
            )));
        }
        if self.kind != ManifoldKind::Euclidean {
            let scale = self.radius * (1.0 + components.norm());
            let err = self.inner(&x.coords, &components).abs() / scale;
            if err > POINT_TOL {
                return Err(Error::InvalidInput(format!("vector not tangent (residual {err:e})")));
            }
        }
        Ok(TangentVector { base: x.clone(), components })
    }

    /// Projects an ambient vector onto the tangent space at `x`.
    pub fn project_tangent(&self, x: &Point, v: &DVector<f64>) -> TangentVector {
        let components = match self.kind {
            ManifoldKind::Euclidean => v.clone(),
            ManifoldKind::Sphere | ManifoldKind::Hyperbolic => {
                let c = self.inner(&x.coords, v) / self.inner(&x.coords, &x.coords);
                v - &x.coords * c
            }
        };
        TangentVector { base: x.clone(), components }
    }

    pub fn exp_map(&self, x: &Point, v: &TangentVector) -> Point {
        self.project_point(self.exp_raw(&x.coords, &v.components))
    }

    /// Unit-time geodesic flow on raw ambient vectors (no projection).
    pub fn exp_raw(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let r = self.radius;
        match self.kind {
            ManifoldKind::Euclidean => x + v,
            ManifoldKind::Sphere => {
                let t = self.norm(v) / r;
                x * t.cos() + v * sinc(t)
            }
            ManifoldKind::Hyperbolic => {
                let t = self.norm(v) / r;
                x * t.cosh() + v * sinhc(t)
            }
        }
    }

    /// Point and velocity of `t ↦ exp_x(t v)`.
    pub fn geodesic(&self, x: &DVector<f64>, v: &DVector<f64>, t: f64) -> (DVector<f64>, DVector<f64>) {
        let r = self.radius;
        match self.kind {
            ManifoldKind::Euclidean => (x + v * t, v.clone()),
            ManifoldKind::Sphere => {
                let s = self.norm(v) / r;
                let th = s * t;
                let p = x * th.cos() + v * (t * sinc(th));
                let vel = v * th.cos() - x * (s * th.sin());
                (p, vel)
            }
            ManifoldKind::Hyperbolic => {
                let s = self.norm(v) / r;
                let th = s * t;
                let p = x * th.cosh() + v * (t * sinhc(th));
                let vel = v * th.cosh() + x * (s * th.sinh());
                (p, vel)
            }
        }
    }

    pub fn distance(&self, x: &Point, y: &Point) -> f64 {
        self.distance_raw(&x.coords, &y.coords)
    }

    pub fn distance_raw(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        if x == y {
            return 0.0;
        }
        let r = self.radius;
        let r2 = r * r;
        match self.kind {
            ManifoldKind::Euclidean => (y - x).norm(),
            ManifoldKind::Sphere => {
                let c = x.dot(y) / r2;
                let w = y - x * c;
                r * (w.norm() / r).atan2(c)
            }
            ManifoldKind::Hyperbolic => {
                let c = -self.inner(x, y) / r2;
                let w = y - x * c;
                r * (self.norm(&w) / r).asinh()
            }
        }
    }

    fn check_cut(&self, d: f64) -> Result<()> {
        let limit = self.cut_limit();
        if d.is_finite() && d < limit {
            Ok(())
        } else {
            Err(Error::CutLocus { distance: d, limit })
        }
    }

    pub fn log_map(&self, x: &Point, y: &Point) -> Result<TangentVector> {
        let components = self.log_raw(&x.coords, &y.coords)?;
        Ok(TangentVector { base: x.clone(), components })
    }

    pub fn log_raw(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        let r = self.radius;
        let r2 = r * r;
        match self.kind {
            ManifoldKind::Euclidean => Ok(y - x),
            ManifoldKind::Sphere => {
                let c = x.dot(y) / r2;
                let w = y - x * c;
                let wn = w.norm();
                let d = r * (wn / r).atan2(c);
                self.check_cut(d)?;
                if wn == 0.0 {
                    return Ok(DVector::zeros(x.len()));
                }
                Ok(w * (d / wn))
            }
            ManifoldKind::Hyperbolic => {
                let c = -self.inner(x, y) / r2;
                let w = y - x * c;
                let wn = self.norm(&w);
                if wn == 0.0 {
                    return Ok(DVector::zeros(x.len()));
                }
                let d = r * (wn / r).asinh();
                Ok(w * (d / wn))
            }
        }
    }

    /// Transport of `w` along `t ↦ exp_x(t v)` from `t = 0` to `t = 1`.
    pub fn transport_along(&self, x: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let r = self.radius;
        let vn = self.norm(v);
        if self.kind == ManifoldKind::Euclidean || vn == 0.0 {
            return w.clone();
        }
        let u = v / vn;
        let th = vn / r;
        let uw = self.inner(&u, w);
        match self.kind {
            ManifoldKind::Sphere => w + (&u * (th.cos() - 1.0) - x * (th.sin() / r)) * uw,
            ManifoldKind::Hyperbolic => w + (&u * (th.cosh() - 1.0) + x * (th.sinh() / r)) * uw,
            ManifoldKind::Euclidean => unreachable!(),
        }
    }

    pub fn parallel_transport(&self, v: &TangentVector, y: &Point) -> Result<TangentVector> {
        let lv = self.log_raw(&v.base.coords, &y.coords)?;
        let components = self.transport_along(&v.base.coords, &lv, &v.components);
        Ok(TangentVector { base: y.clone(), components })
    }

    /// R(u,v,w,z) = K (⟨u,w⟩⟨v,z⟩ − ⟨u,z⟩⟨v,w⟩).
    pub fn riemann_tensor(
        &self,
        _x: &Point,
        u: &TangentVector,
        v: &TangentVector,
        w: &TangentVector,
        z: &TangentVector,
    ) -> f64 {
        let (u, v, w, z) = (&u.components, &v.components, &w.components, &z.components);
        self.curvature() * (self.inner(u, w) * self.inner(v, z) - self.inner(u, z) * self.inner(v, w))
    }

    /// Orthonormal frame of the tangent space at `x` (columns).
    pub fn frame(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim;
        match self.kind {
            ManifoldKind::Euclidean => DMatrix::identity(n, n),
            ManifoldKind::Sphere => {
                let xh = x / self.radius;
                let mut w = xh.clone();
                w[n] -= 1.0;
                let wn2 = w.norm_squared();
                let mut h = DMatrix::identity(n + 1, n + 1);
                if wn2 > 1e-28 {
                    h -= (&w * w.transpose()) * (2.0 / wn2);
                }
                h.columns(0, n).into_owned()
            }
            ManifoldKind::Hyperbolic => {
                let xh = x / self.radius;
                let s = xh.rows(0, n).into_owned();
                let t = xh[n];
                let mut e = DMatrix::zeros(n + 1, n);
                for a in 0..n {
                    for i in 0..n {
                        e[(i, a)] = s[i] * s[a] / (1.0 + t);
                    }
                    e[(a, a)] += 1.0;
                    e[(n, a)] = s[a];
                }
                e
            }
        }
    }

    /// Frame coordinates of an ambient tangent vector.
    pub fn to_frame(&self, frame: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            ManifoldKind::Hyperbolic => {
                let mut gv = v.clone();
                gv[self.dim] = -gv[self.dim];
                frame.transpose() * gv
            }
            _ => frame.transpose() * v,
        }
    }

    /// Orthonormal frame at `x` whose first vector is the unit tangent `u`.
    pub fn adapted_frame(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let e = self.frame(x);
        let c = self.to_frame(&e, u);
        let c = &c / c.norm();
        e * householder_to(&c)
    }

    /// Transports every column of `frame` along `t ↦ exp_x(t v)`.
    pub fn transport_frame(&self, x: &DVector<f64>, v: &DVector<f64>, frame: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = frame.clone();
        for k in 0..frame.ncols() {
            let col = self.transport_along(x, v, &frame.column(k).into_owned());
            out.set_column(k, &col);
        }
        out
    }

    /// (cs/sn)(d) and 1/sn(d) for the constant-curvature comparison functions.
    fn jacobi_ratios(&self, d: f64) -> (f64, f64) {
        let r = self.radius;
        match self.kind {
            ManifoldKind::Euclidean => (1.0 / d, 1.0 / d),
            ManifoldKind::Sphere => {
                let t = d / r;
                (t.cos() / (r * t.sin()), 1.0 / (r * t.sin()))
            }
            ManifoldKind::Hyperbolic => {
                let t = d / r;
                (t.cosh() / (r * t.sinh()), 1.0 / (r * t.sinh()))
            }
        }
    }

    fn pair_setup(&self, x: &Point, y: &Point) -> Result<(f64, DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let d = self.distance(x, y);
        self.check_cut(d)?;
        if d <= 0.0 {
            return Err(Error::InvalidInput("distance jet needs distinct points".into()));
        }
        let v = self.log_raw(&x.coords, &y.coords)?;
        let u = &v / self.norm(&v);
        let fx = self.adapted_frame(&x.coords, &u);
        let fy = self.transport_frame(&x.coords, &v, &fx);
        Ok((d, v, fx, fy))
    }

    /// Closed-form distance jet.
    pub fn distance_jet(&self, x: &Point, y: &Point) -> Result<DistanceJet> {
        let (d, _, frame_x, frame_y) = self.pair_setup(x, y)?;
        let n = self.dim;
        let (h, k) = self.jacobi_ratios(d);
        let mut proj = DMatrix::<f64>::identity(n, n);
        proj[(0, 0)] = 0.0;
        let mut u_xy = DVector::zeros(n);
        u_xy[0] = 1.0;
        let u_yx = -&u_xy;
        Ok(DistanceJet {
            d,
            l1: -&u_xy / d,
            l2: -&u_yx / d,
            q1: &proj * (h / d),
            q2: &proj * (h / d),
            q12: &proj * (-k / d),
            u_xy,
            u_yx,
            frame_x,
            frame_y,
        })
    }

    /// Central finite-difference jet in the same frames as
    /// [`Self::distance_jet`].
    pub fn distance_jet_numeric(&self, x: &Point, y: &Point, step: f64) -> Result<DistanceJet> {
        let (d, _, frame_x, frame_y) = self.pair_setup(x, y)?;
        if !(step > 0.0 && step < d / 10.0) {
            return Err(Error::InvalidInput(format!("step {step} must lie in (0, d/10)")));
        }
        let n = self.dim;
        let f = |z: &DVector<f64>| -> f64 {
            let vx = &frame_x * z.rows(0, n);
            let vy = &frame_y * z.rows(n, n);
            let px = self.exp_raw(&x.coords, &vx);
            let py = self.exp_raw(&y.coords, &vy);
            self.distance_raw(&px, &py)
        };
        let m = 2 * n;
        let e = |i: usize| {
            let mut z = DVector::zeros(m);
            z[i] = step;
            z
        };
        let f0 = f(&DVector::zeros(m));
        let mut grad = DVector::zeros(m);
        let mut hess = DMatrix::zeros(m, m);
        for i in 0..m {
            let ei = e(i);
            let fp = f(&ei);
            let fm = f(&(-&ei));
            grad[i] = (fp - fm) / (2.0 * step);
            hess[(i, i)] = (fp - 2.0 * f0 + fm) / (step * step);
            for j in 0..i {
                let ej = e(j);
                let v = (f(&(&ei + &ej)) - f(&(&ei - &ej)) - f(&(&ej - &ei)) + f(&(-&ei - &ej))) / (4.0 * step * step);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        let mut u_xy = DVector::zeros(n);
        u_xy[0] = 1.0;
        Ok(DistanceJet {
            d,
            l1: grad.rows(0, n) / d,
            l2: grad.rows(n, n) / d,
            q1: hess.view((0, 0), (n, n)) / d,
            q2: hess.view((n, n), (n, n)) / d,
            q12: hess.view((0, n), (n, n)) / d,
            u_yx: -&u_xy,
            u_xy,
            frame_x,
            frame_y,
        })
    }
}

impl fmt::Display for ModelManifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ManifoldKind::Euclidean => write!(f, "euclidean:{}", self.dim),
            ManifoldKind::Sphere => write!(f, "sphere:{}:{}", self.dim, self.radius),
            ManifoldKind::Hyperbolic => write!(f, "hyperbolic:{}:{}", self.dim, self.radius),
        }
    }
}

impl FromStr for ModelManifold {
    type Err = Error;

    /// Parses `euclidean:n`, `sphere:n:r` or `hyperbolic:n:r`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || Error::InvalidInput(format!("invalid manifold specification '{s}'"));
        let dim: usize = parts.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        match (parts[0], parts.len()) {
            ("euclidean", 2) => ModelManifold::new(ManifoldKind::Euclidean, dim, 1.0),
            ("sphere", 3) | ("hyperbolic", 3) => {
                let r: f64 = parts[2].parse().map_err(|_| bad())?;
                let kind = if parts[0] == "sphere" { ManifoldKind::Sphere } else { ManifoldKind::Hyperbolic };
                ModelManifold::new(kind, dim, r)
            }
            _ => Err(bad()),
        }
    }
}
