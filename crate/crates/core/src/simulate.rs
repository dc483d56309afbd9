//! Euler–Maruyama simulation of single and coupled diffusion paths, the
//! path-wise contraction identity and the Lipschitz variance bound.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::coupling::extremal_pair;
use crate::curvature::kappa_pair_terms;
use crate::error::{Error, Result};
use crate::fields::{random_point, DiffusionField, DiffusionSpec, DriftField};
use crate::linalg::{mean, pairwise_sum, psd_factor, sym_sqrt, symmetrize};
use crate::manifold::{DistanceJet, ManifoldKind, ModelManifold, Point};
use crate::rng;

/// Law of the standardized increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Noise {
    Gaussian,
    /// Independent ±1 coordinates (weak order one, same first two moments).
    #[default]
    TwoPoint,
}

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Plain Euler–Maruyama in the exponential chart.
    Euler,
    /// Euler–Maruyama, except that a linear drift `−kx` on Euclidean space is
    /// integrated exactly.
    #[default]
    ExponentialLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepOptions {
    pub noise: Noise,
    pub scheme: Scheme,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub trajectories: usize,
    pub seed: u64,
    /// Paths abort once `d(x,y) ≥ πr − cut_margin`.
    pub cut_margin: f64,
    /// Keep every `record_stride`-th state (the last state is always kept).
    pub record_stride: usize,
    pub noise: Noise,
    pub scheme: Scheme,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, trajectories: usize, seed: u64) -> Self {
        Self {
            dt,
            horizon,
            trajectories,
            seed,
            cut_margin: 1e-3,
            record_stride: 1,
            noise: Noise::default(),
            scheme: Scheme::default(),
        }
    }

    pub fn validate(&self, m: &ModelManifold) -> Result<()> {
        if !(self.dt > 0.0) || !(self.horizon > 0.0) || self.dt > self.horizon {
            return Err(Error::InvalidInput("need 0 < dt ≤ horizon".into()));
        }
        if self.trajectories == 0 {
            return Err(Error::InvalidInput("need at least one trajectory".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidInput("record stride must be positive".into()));
        }
        let upper = if m.kind == ManifoldKind::Sphere { 0.5 * m.cut_limit() } else { f64::INFINITY };
        if !(self.cut_margin > 0.0 && self.cut_margin < upper) {
            return Err(Error::InvalidInput(format!("cut margin must lie in (0, {upper})")));
        }
        Ok(())
    }

    fn options(&self) -> StepOptions {
        StepOptions { noise: self.noise, scheme: self.scheme }
    }

    fn steps(&self) -> usize {
        ((self.horizon / self.dt) - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AbortReason {
    CutLocus { distance: f64, time: f64 },
    Coalesced { time: f64 },
    Numerical(String),
}

#[derive(Debug, Clone)]
pub struct CoupledTrajectory {
    pub times: Vec<f64>,
    pub pair_states: Vec<(Point, Point)>,
    pub log_distance: Vec<f64>,
    /// Running trapezoid integral of κ(x(s), y(s)).
    pub kappa_integral: Vec<f64>,
    pub aborted: Option<AbortReason>,
}

impl CoupledTrajectory {
    /// `|log d(t) − log d(0) + ∫₀ᵗ κ ds|` at each recorded time.
    pub fn defects(&self) -> Vec<f64> {
        let l0 = self.log_distance[0];
        self.log_distance.iter().zip(&self.kappa_integral).map(|(l, k)| (l - l0 + k).abs()).collect()
    }

    pub fn final_defect(&self) -> f64 {
        let l0 = self.log_distance[0];
        let last = self.log_distance.len() - 1;
        (self.log_distance[last] - l0 + self.kappa_integral[last]).abs()
    }
}

/// Mean final defect over non-aborted paths and the aborted fraction.
pub fn defect_summary(paths: &[CoupledTrajectory]) -> (f64, f64) {
    let done: Vec<f64> = paths.iter().filter(|p| p.aborted.is_none()).map(|p| p.final_defect()).collect();
    let aborted = (paths.len() - done.len()) as f64 / paths.len().max(1) as f64;
    let m = if done.is_empty() { f64::NAN } else { mean(&done) };
    (m, aborted)
}

fn draw<R: Rng>(n: usize, noise: Noise, rng: &mut R) -> DVector<f64> {
    match noise {
        Noise::Gaussian => DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)),
        Noise::TwoPoint => DVector::from_fn(n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 }),
    }
}

/// Moves `x` by drift `f` and diffusive increment `incr` (frame
/// coordinates, already multiplied by `A^{1/2}` but not by `√dt`).
fn advance(
    spec: &DiffusionSpec,
    x: &DVector<f64>,
    frame: &DMatrix<f64>,
    f: &DVector<f64>,
    incr: &DVector<f64>,
    dt: f64,
    scheme: Scheme,
) -> Point {
    let m = &spec.manifold;
    if let (Scheme::ExponentialLinear, ManifoldKind::Euclidean, DriftField::Linear(k)) = (scheme, m.kind, &spec.drift) {
        if *k != 0.0 {
            let decay = (-k * dt).exp();
            let sd = ((1.0 - decay * decay) / (2.0 * k)).sqrt();
            return Point { coords: x * decay + frame * (incr * sd) };
        }
    }
    let v = frame * (f * dt + incr * dt.sqrt());
    m.project_point(m.exp_raw(x, &v))
}

/// One Euler–Maruyama step `x′ = exp_x(F dt + √dt A^{1/2} ξ)`, with `noise`
/// the standardized increment in the standard frame at `x`.
pub fn step_single(spec: &DiffusionSpec, x: &Point, dt: f64, noise: &DVector<f64>) -> Point {
    step_single_with(spec, x, dt, noise, Scheme::Euler)
}

pub fn step_single_with(spec: &DiffusionSpec, x: &Point, dt: f64, noise: &DVector<f64>, scheme: Scheme) -> Point {
    let frame = spec.manifold.frame(&x.coords);
    let a = spec.a_frame(&x.coords, &frame);
    let f = spec.f_frame(&x.coords, &frame);
    let incr = sym_sqrt(&a) * noise;
    advance(spec, &x.coords, &frame, &f, &incr, dt, scheme)
}

/// Endpoint of a path of length `t` from `x`, using `substeps` steps.
pub fn sample_endpoint<R: Rng>(
    spec: &DiffusionSpec,
    x: &DVector<f64>,
    t: f64,
    substeps: usize,
    noise: Noise,
    rng: &mut R,
) -> DVector<f64> {
    let dt = t / substeps as f64;
    let n = spec.manifold.dim;
    let mut p = Point { coords: x.clone() };
    for _ in 0..substeps {
        let z = draw(n, noise, rng);
        p = step_single_with(spec, &p, dt, &z, Scheme::ExponentialLinear);
    }
    p.coords
}

/// Cross covariance `C⁺` in the jet frames.
fn plus_covariance(
    spec: &DiffusionSpec,
    ax: &DMatrix<f64>,
    ay: &DMatrix<f64>,
    jet: &DistanceJet,
) -> Result<DMatrix<f64>> {
    if let DiffusionField::Metric(s) = spec.diffusion {
        let n = ax.nrows();
        return Ok(DMatrix::identity(n, n) * s);
    }
    Ok(extremal_pair(ax, ay, &jet.q12, &jet.u_xy, &(-&jet.u_yx))?.0)
}

/// Joint increments `(ξ, η)` with covariance `[[Ax, C], [Cᵀ, Ay]]`.
fn joint_increments(
    ax: &DMatrix<f64>,
    ay: &DMatrix<f64>,
    c: &DMatrix<f64>,
    z1: &DVector<f64>,
    z2: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let n = ax.nrows();
    if let Some(ch) = ax.clone().cholesky() {
        let lx = ch.l();
        if let Some(mt) = lx.solve_lower_triangular(c) {
            let schur = symmetrize(&(ay - mt.transpose() * &mt));
            let ls = psd_factor(&schur);
            return (&lx * z1, mt.transpose() * z1 + ls * z2);
        }
    }
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(ax);
    block.view_mut((0, n), (n, n)).copy_from(c);
    block.view_mut((n, 0), (n, n)).copy_from(&c.transpose());
    block.view_mut((n, n), (n, n)).copy_from(ay);
    let l = psd_factor(&symmetrize(&block));
    let mut z = DVector::zeros(2 * n);
    z.rows_mut(0, n).copy_from(z1);
    z.rows_mut(n, n).copy_from(z2);
    let w = l * z;
    (w.rows(0, n).into_owned(), w.rows(n, n).into_owned())
}

fn coupled_from_jet<R: Rng>(
    spec: &DiffusionSpec,
    x: &Point,
    y: &Point,
    jet: &DistanceJet,
    dt: f64,
    opts: StepOptions,
    rng: &mut R,
) -> Result<(Point, Point)> {
    let n = spec.manifold.dim;
    let ax = spec.a_frame(&x.coords, &jet.frame_x);
    let ay = spec.a_frame(&y.coords, &jet.frame_y);
    let fx = spec.f_frame(&x.coords, &jet.frame_x);
    let fy = spec.f_frame(&y.coords, &jet.frame_y);
    let c = plus_covariance(spec, &ax, &ay, jet)?;
    let z1 = draw(n, opts.noise, rng);
    let z2 = draw(n, opts.noise, rng);
    let (xi, eta) = joint_increments(&ax, &ay, &c, &z1, &z2);
    Ok((
        advance(spec, &x.coords, &jet.frame_x, &fx, &xi, dt, opts.scheme),
        advance(spec, &y.coords, &jet.frame_y, &fy, &eta, dt, opts.scheme),
    ))
}

/// One step of the coupled diffusion driven by `C⁺`. Coincident points move
/// with identical increments.
pub fn step_coupled<R: Rng>(
    spec: &DiffusionSpec,
    x: &Point,
    y: &Point,
    dt: f64,
    cut_margin: f64,
    opts: StepOptions,
    rng: &mut R,
) -> Result<(Point, Point)> {
    let m = &spec.manifold;
    let d = m.distance(x, y);
    if d >= m.cut_limit() - cut_margin {
        return Err(Error::CutLocus { distance: d, limit: m.cut_limit() - cut_margin });
    }
    if d == 0.0 {
        let z = draw(m.dim, opts.noise, rng);
        let p = step_single_with(spec, x, dt, &z, opts.scheme);
        return Ok((p.clone(), p));
    }
    let jet = m.distance_jet(x, y)?;
    coupled_from_jet(spec, x, y, &jet, dt, opts, rng)
}

fn run_one(spec: &DiffusionSpec, x0: &Point, y0: &Point, cfg: &SimConfig, index: usize) -> CoupledTrajectory {
    let m = &spec.manifold;
    let limit = m.cut_limit() - cfg.cut_margin;
    let mut rng = rng::stream(cfg.seed, &[index as u64]);
    let opts = cfg.options();
    let steps = cfg.steps();

    let mut x = x0.clone();
    let mut y = y0.clone();
    let mut jet = m.distance_jet(&x, &y).expect("validated start pair");
    let mut kappa = total(kappa_pair_terms(spec, &x.coords, &y.coords, &jet));
    let mut integral = 0.0;
    let mut t = 0.0;
    let mut out = CoupledTrajectory {
        times: vec![0.0],
        pair_states: vec![(x.clone(), y.clone())],
        log_distance: vec![jet.d.ln()],
        kappa_integral: vec![0.0],
        aborted: None,
    };
    for k in 1..=steps {
        let h = cfg.dt.min(cfg.horizon - t);
        let (nx, ny) = match coupled_from_jet(spec, &x, &y, &jet, h, opts, &mut rng) {
            Ok(p) => p,
            Err(e) => {
                out.aborted = Some(AbortReason::Numerical(e.to_string()));
                break;
            }
        };
        t = if k == steps { cfg.horizon } else { t + h };
        let d = m.distance(&nx, &ny);
        if d >= limit {
            out.aborted = Some(AbortReason::CutLocus { distance: d, time: t });
            break;
        }
        if d == 0.0 {
            out.aborted = Some(AbortReason::Coalesced { time: t });
            break;
        }
        jet = match m.distance_jet(&nx, &ny) {
            Ok(j) => j,
            Err(e) => {
                out.aborted = Some(AbortReason::Numerical(e.to_string()));
                break;
            }
        };
        let next = total(kappa_pair_terms(spec, &nx.coords, &ny.coords, &jet));
        integral += 0.5 * h * (kappa + next);
        kappa = next;
        x = nx;
        y = ny;
        if k % cfg.record_stride == 0 || k == steps {
            out.times.push(t);
            out.pair_states.push((x.clone(), y.clone()));
            out.log_distance.push(jet.d.ln());
            out.kappa_integral.push(integral);
        }
    }
    out
}

fn total(t: crate::curvature::CurvatureTerms) -> f64 {
    t.drift + t.riemann + t.penalty
}

/// Simulates `cfg.trajectories` coupled paths from `(x0, y0)` in parallel.
/// Path `i` draws from the random stream keyed by `(seed, i)`, so results do
/// not depend on the thread count.
pub fn run_coupled(spec: &DiffusionSpec, x0: &Point, y0: &Point, cfg: &SimConfig) -> Result<Vec<CoupledTrajectory>> {
    let m = &spec.manifold;
    cfg.validate(m)?;
    let d = m.distance(x0, y0);
    let limit = m.cut_limit() - cfg.cut_margin;
    if !(d > 0.0) {
        return Err(Error::InvalidInput("coupled run needs distinct start points".into()));
    }
    if d >= limit {
        return Err(Error::CutLocus { distance: d, limit });
    }
    Ok((0..cfg.trajectories).into_par_iter().map(|i| run_one(spec, x0, y0, cfg, i)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceCheck {
    pub variance: f64,
    /// Monte Carlo standard error of `variance`.
    pub std_error: f64,
    /// `∫ dμ / Ric` for the generator `Δ`.
    pub bound: f64,
}

impl VarianceCheck {
    pub fn holds(&self) -> bool {
        self.variance <= self.bound + 3.0 * self.std_error
    }
}

const VARIANCE_CHUNK: usize = 4096;

/// Variance of `f` under the uniform law of a sphere against the bound
/// `∫ dμ / Ric`, valid for functions with Lipschitz constant at most one.
pub fn lipschitz_variance_check(
    m: &ModelManifold,
    f: &(dyn Fn(&DVector<f64>) -> f64 + Sync),
    samples: usize,
    seed: u64,
) -> Result<VarianceCheck> {
    if m.kind != ManifoldKind::Sphere || m.dim < 2 {
        return Err(Error::InvalidInput("variance bound needs a sphere of dimension ≥ 2".into()));
    }
    if samples < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    let chunks = samples.div_ceil(VARIANCE_CHUNK);
    let values: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = rng::stream(seed, &[c as u64]);
            let len = VARIANCE_CHUNK.min(samples - c * VARIANCE_CHUNK);
            (0..len).map(move |_| f(&random_point(m, 1.0, &mut rng))).collect::<Vec<_>>()
        })
        .collect();
    let n = values.len() as f64;
    let mu = pairwise_sum(&values) / n;
    let dev2: Vec<f64> = values.iter().map(|v| (v - mu) * (v - mu)).collect();
    let dev4: Vec<f64> = dev2.iter().map(|v| v * v).collect();
    let var = pairwise_sum(&dev2) / (n - 1.0);
    let m4 = pairwise_sum(&dev4) / n;
    let std_error = ((m4 - var * var).max(0.0) / n).sqrt();
    let ric = (m.dim as f64 - 1.0) / (m.radius * m.radius);
    Ok(VarianceCheck { variance: var, std_error, bound: 1.0 / ric })
}
