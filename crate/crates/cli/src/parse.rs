//! Parsers for the string-valued parameters.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ricci_core::fields::{h_admissible_field, random_unit_tangent};
use ricci_core::{
    rng, DiffusionField, DiffusionSpec, DriftField, ManifoldKind, ModelManifold, Noise, Point, Potential,
    RiemannLikeTensor, Scheme, TangentVector,
};
use serde::Deserialize;

use crate::config::Params;
use crate::error::CliError;

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub fn manifold(p: &Params) -> Result<ModelManifold, CliError> {
    Params::require(&p.manifold, "manifold")?.parse().map_err(CliError::invalid)
}

pub fn number(s: &str, what: &str) -> Result<f64, CliError> {
    s.trim().parse().map_err(|_| bad(format!("{what}: '{s}' is not a number")))
}

/// Comma-separated numbers.
pub fn list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(|t| number(t, what)).collect()
}

pub fn point(m: &ModelManifold, s: Option<&str>, what: &str) -> Result<Point, CliError> {
    match s {
        None => Ok(m.pole()),
        Some(s) => m.point(DVector::from_vec(list(s, what)?)).map_err(|e| bad(format!("{what}: {e}"))),
    }
}

/// A tangent vector at `x`; "any" draws a uniformly random unit vector from
/// the seed.
pub fn direction(m: &ModelManifold, x: &Point, s: &str, seed: u64) -> Result<TangentVector, CliError> {
    let comps = if s.trim() == "any" {
        random_unit_tangent(m, &x.coords, &mut rng::stream(seed, &[0xd1ec]))
    } else {
        DVector::from_vec(list(s, "direction")?)
    };
    let v = m.tangent(x, comps).map_err(|e| bad(format!("direction: {e}")))?;
    if !(m.norm(&v.components) > 0.0) {
        return Err(bad("direction must be nonzero"));
    }
    Ok(v)
}

/// Partner point at geodesic distance `d` from `x` along `u`.
pub fn along(m: &ModelManifold, x: &Point, u: &TangentVector, d: f64) -> Result<Point, CliError> {
    if !(d > 0.0) || d >= m.cut_limit() {
        return Err(bad(format!("distance must lie in (0, {})", m.cut_limit())));
    }
    let unit = &u.components / m.norm(&u.components);
    Ok(m.project_point(m.exp_raw(&x.coords, &(unit * d))))
}

/// `a*cos`, `a*cos^2`, `c0 + c1*cos + c2*cos^2 ...` on spheres, `c*r^2` on
/// Euclidean space. Missing coefficients default to one.
pub fn potential(s: &str) -> Result<Potential, CliError> {
    let text: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if text.is_empty() {
        return Err(bad("empty potential expression"));
    }
    let mut zonal: Vec<f64> = Vec::new();
    let mut quadratic: Option<f64> = None;
    for term in split_terms(&text) {
        let (coef, var) = split_coefficient(&term, s)?;
        match var {
            "" => {
                if zonal.is_empty() {
                    zonal.push(0.0);
                }
                zonal[0] += coef;
            }
            "r^2" => *quadratic.get_or_insert(0.0) += coef,
            v if v.starts_with("cos") => {
                let k = match &v[3..] {
                    "" => 1,
                    e => e
                        .strip_prefix('^')
                        .and_then(|p| p.parse::<usize>().ok())
                        .ok_or_else(|| bad(format!("bad power in potential '{s}'")))?,
                };
                if zonal.len() <= k {
                    zonal.resize(k + 1, 0.0);
                }
                zonal[k] += coef;
            }
            _ => return Err(bad(format!("unsupported term '{term}' in potential '{s}'"))),
        }
    }
    match quadratic {
        Some(c) if zonal.iter().all(|&a| a == 0.0) => Ok(Potential::Quadratic(c)),
        Some(_) => Err(bad(format!("potential '{s}' mixes r^2 with other terms"))),
        None if zonal.iter().all(|&a| a == 0.0) => Ok(Potential::zero()),
        None => Ok(Potential::Zonal(zonal)),
    }
}

/// Splits at `+`/`-` signs that are not part of an exponent.
fn split_terms(text: &str) -> Vec<String> {
    let mut terms = Vec::new();
    let mut cur = String::new();
    let mut prev: Option<char> = None;
    for c in text.chars() {
        let exponent_sign = matches!(prev, Some('e' | 'E')) && cur.chars().next().is_some_and(|f| f != 'c');
        if (c == '+' || c == '-') && prev.is_some() && !matches!(prev, Some('*' | '^')) && !exponent_sign {
            terms.push(std::mem::take(&mut cur));
        }
        cur.push(c);
        prev = Some(c);
    }
    terms.push(cur);
    terms.into_iter().filter(|t| !t.is_empty() && t != "+").collect()
}

fn split_coefficient<'a>(term: &'a str, whole: &str) -> Result<(f64, &'a str), CliError> {
    let idx = term.find("cos").or_else(|| term.find("r^2"));
    let (num, var) = match idx {
        Some(i) => (term[..i].trim_end_matches('*'), &term[i..]),
        None => (term, ""),
    };
    let coef = match num {
        "" | "+" => 1.0,
        "-" => -1.0,
        n => n.parse().map_err(|_| bad(format!("bad coefficient '{n}' in potential '{whole}'")))?,
    };
    Ok((coef, var))
}

pub fn noise(p: &Params) -> Result<Noise, CliError> {
    match p.noise.as_deref() {
        None => Ok(Noise::default()),
        Some("two-point") => Ok(Noise::TwoPoint),
        Some("gaussian") => Ok(Noise::Gaussian),
        Some(o) => Err(bad(format!("unknown noise '{o}' (two-point, gaussian)"))),
    }
}

pub fn scheme(p: &Params) -> Result<Scheme, CliError> {
    match p.scheme.as_deref() {
        None => Ok(Scheme::default()),
        Some("exponential-linear") => Ok(Scheme::ExponentialLinear),
        Some("euler") => Ok(Scheme::Euler),
        Some(o) => Err(bad(format!("unknown scheme '{o}' (exponential-linear, euler)"))),
    }
}

pub fn scale(p: &Params) -> Result<f64, CliError> {
    let s = p.scale.unwrap_or(1.0);
    if !(s > 0.0) || !s.is_finite() {
        return Err(bad("scale must be positive"));
    }
    Ok(s)
}

/// The process named by --field (and --drift / --potential).
pub fn spec(p: &Params, m: &ModelManifold) -> Result<DiffusionSpec, CliError> {
    let s = scale(p)?;
    let field = match (&p.field, &p.potential) {
        (Some(f), _) => f.trim().to_string(),
        (None, Some(pot)) => format!("potential:{pot}"),
        (None, None) => return Err(bad("missing required parameter --field")),
    };
    let preset = match field.as_str() {
        "brownian" => Some(DiffusionSpec::brownian(*m)),
        "ou" => Some(DiffusionSpec::ornstein_uhlenbeck(*m, 1.0).map_err(CliError::invalid)?),
        f if f.starts_with("ou:") => {
            let k = number(&f[3..], "ou rate")?;
            Some(DiffusionSpec::ornstein_uhlenbeck(*m, k).map_err(CliError::invalid)?)
        }
        f if f.starts_with("potential:") => {
            Some(DiffusionSpec::reversible(*m, s, potential(&f[10..])?).map_err(CliError::invalid)?)
        }
        _ => None,
    };
    if let Some(spec) = preset {
        if p.drift.is_some() {
            return Err(bad(format!("--drift cannot be combined with the preset field '{field}'")));
        }
        return Ok(spec);
    }
    let parts: Vec<DiffusionField> =
        field.split('+').map(|t| diffusion_term(t.trim(), m, p.seed())).collect::<Result<_, _>>()?;
    let diffusion = if parts.len() == 1 { parts.into_iter().next().unwrap() } else { DiffusionField::Sum(parts) };
    DiffusionSpec::new(*m, diffusion, drift(p, s)?).map_err(CliError::invalid)
}

fn drift(p: &Params, s: f64) -> Result<DriftField, CliError> {
    match p.drift.as_deref().map(str::trim) {
        None | Some("zero") => Ok(DriftField::Zero),
        Some(d) if d.starts_with("linear:") => Ok(DriftField::Linear(number(&d[7..], "linear drift rate")?)),
        Some(d) if d.starts_with("potential:") => {
            Ok(DriftField::Gradient { potential: potential(&d[10..])?, scale: s })
        }
        Some(d) => Err(bad(format!("unknown drift '{d}' (zero, linear:<k>, potential:<expr>)"))),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorFile {
    dim: usize,
    data: Vec<f64>,
}

/// Dimension of the ambient tensors for `m` (Euclidean space is lifted by one).
fn tensor_dim(m: &ModelManifold) -> usize {
    m.ambient_dim() + usize::from(m.kind == ManifoldKind::Euclidean)
}

fn example(m: &ModelManifold, t: RiemannLikeTensor, seed: u64) -> Result<DiffusionField, CliError> {
    let adm = h_admissible_field(m, &t, 64, seed).map_err(CliError::invalid)?;
    if adm.non_psd_warning {
        eprintln!("warning: tensor field is not positive semidefinite (smallest eigenvalue {:e})", adm.min_eigenvalue);
    }
    Ok(adm.field)
}

fn diffusion_term(t: &str, m: &ModelManifold, seed: u64) -> Result<DiffusionField, CliError> {
    if let Some(s) = t.strip_prefix("metric:") {
        let s = number(s, "metric scale")?;
        if !(s > 0.0) {
            return Err(bad("metric scale must be positive"));
        }
        return Ok(DiffusionField::Metric(s));
    }
    if let Some(file) = t.strip_prefix("example-T:") {
        let text = std::fs::read_to_string(Path::new(file))
            .map_err(|e| bad(format!("cannot read tensor file {file}: {e}")))?;
        let tf: TensorFile = serde_json::from_str(&text).map_err(|e| bad(format!("tensor file {file}: {e}")))?;
        let tensor = RiemannLikeTensor::new(tf.dim, tf.data).map_err(CliError::invalid)?;
        return example(m, tensor, seed);
    }
    if let Some(rest) = t.strip_prefix("example-random:") {
        let (terms, s) = rest.split_once(':').ok_or_else(|| bad("use example-random:<terms>:<seed>"))?;
        let terms: usize = terms.parse().map_err(|_| bad(format!("bad term count '{terms}'")))?;
        let s: u64 = s.parse().map_err(|_| bad(format!("bad tensor seed '{s}'")))?;
        if terms == 0 {
            return Err(bad("example-random needs at least one term"));
        }
        return example(m, RiemannLikeTensor::random_nonnegative(tensor_dim(m), terms, s), seed);
    }
    if let Some(rest) = t.strip_prefix("conformal:") {
        let (base, slope) = rest.split_once(':').ok_or_else(|| bad("use conformal:<base>:<c1;c2;...>"))?;
        let slope: Vec<f64> = slope.split(';').map(|c| number(c, "conformal slope")).collect::<Result<_, _>>()?;
        if slope.len() != m.ambient_dim() {
            return Err(bad(format!("conformal slope needs {} components", m.ambient_dim())));
        }
        return Ok(DiffusionField::Conformal {
            base: number(base, "conformal base")?,
            slope: DVector::from_vec(slope),
        });
    }
    Err(bad(format!("unknown field '{t}'")))
}

/// Headerless numeric CSV.
pub fn matrix(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(format!("{}: {e}", path.display())))?;
        rows.push(rec.iter().map(|v| number(v, &path.display().to_string())).collect::<Result<_, _>>()?);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(bad(format!("{}: expected a non-empty rectangular matrix", path.display())));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potential_expressions() {
        assert_eq!(potential("0").unwrap(), Potential::zero());
        assert_eq!(potential("0.3*cos").unwrap(), Potential::Zonal(vec![0.0, 0.3]));
        assert_eq!(potential("cos^2").unwrap(), Potential::Zonal(vec![0.0, 0.0, 1.0]));
        assert_eq!(potential("1 - 2*cos + 1e-3*cos^3").unwrap(), Potential::Zonal(vec![1.0, -2.0, 0.0, 1e-3]));
        assert_eq!(potential("-cos+2.5e-1cos^2").unwrap(), Potential::Zonal(vec![0.0, -1.0, 0.25]));
        assert_eq!(potential("0.5*r^2").unwrap(), Potential::Quadratic(0.5));
        assert!(potential("0.5*sin").is_err());
        assert!(potential("r^2+cos").is_err());
        assert!(potential("cos^x").is_err());
        assert!(potential("").is_err());
    }

    #[test]
    fn display_round_trips_through_the_parser() {
        for p in [Potential::Zonal(vec![0.1, -0.2, 0.3]), Potential::Quadratic(2.0)] {
            assert_eq!(potential(&p.to_string()).unwrap(), p);
        }
    }

    #[test]
    fn lists_and_points() {
        assert_eq!(list("1, -2.5,inf", "x").unwrap(), vec![1.0, -2.5, f64::INFINITY]);
        let m = ModelManifold::sphere(2, 1.0);
        assert!(point(&m, Some("1,0,0"), "p").is_ok());
        assert!(point(&m, Some("1,1,0"), "p").is_err());
        assert!(point(&m, Some("1,0"), "p").is_err());
    }
}
