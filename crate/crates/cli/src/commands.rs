//! Subcommand implementations. Each returns a report or an error; nothing is
//! written here.

use nalgebra::DVector;
use rayon::prelude::*;
use ricci_core::coupling::{c0_covariance, min_coupling_value, rank, sampled_min_cost};
use ricci_core::curvature::{
    estimate_kappa_direct, h_residual, kappa_dir, kappa_dir_by_limit, kappa_pair, kappa_tilde_dir,
    kappa_tilde_dir_by_limit, kappa_tilde_pair, DELTA_LADDER, H_TOL,
};
use ricci_core::fields::{random_point, random_unit_tangent};
use ricci_core::simulate::{defect_summary, lipschitz_variance_check, run_coupled, AbortReason};
use ricci_core::spectral::{bounds_report, discretize, spectrum as spectrum_of, BoundsReport};
use ricci_core::{rng, CostBilinear, DiffusionSpec, ManifoldKind, ModelManifold, Potential, SimConfig, SymPsd};
use serde_json::Value;

use crate::config::Params;
use crate::error::CliError;
use crate::parse;
use crate::report::{Report, Row, Table};

/// Dominance slack used for the `dominance_ok` column of `bounds`.
const DOMINANCE_TOL: f64 = 1e-6;
const DIRECT_LADDER: [f64; 2] = [0.02, 0.01];

pub fn run(command: &str, p: &Params) -> Result<Report, CliError> {
    let main = match command {
        "kappa" => kappa(p)?,
        "coupling" => return coupling(p),
        "simulate" => return simulate(p),
        "spectrum" => spectrum(p)?,
        "bounds" => return bounds(p),
        "check-h" => check_h(p)?,
        "variance" => variance(p)?,
        "sweep" => sweep(p)?,
        other => return Err(CliError::Validation(format!("unknown command '{other}'"))),
    };
    Ok(Report { command: command.into(), main, ..Default::default() })
}

fn coords(v: &DVector<f64>) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn field_label(p: &Params) -> String {
    match (&p.field, &p.potential) {
        (Some(f), _) => f.clone(),
        (None, Some(pot)) => format!("potential:{pot}"),
        (None, None) => String::new(),
    }
}

fn kappa(p: &Params) -> Result<Table, CliError> {
    let m = parse::manifold(p)?;
    let spec = parse::spec(p, &m)?;
    let seed = p.seed();
    let x = parse::point(&m, p.point.as_deref(), "point")?;
    let method = p.method.as_deref().unwrap_or("formula");
    let tilde = match p.variant.as_deref().unwrap_or("plain") {
        "plain" => false,
        "tilde" => true,
        o => return Err(CliError::Validation(format!("unknown variant '{o}' (plain, tilde)"))),
    };
    let dir = p.direction.as_deref().map(|d| parse::direction(&m, &x, d, seed)).transpose()?;
    let y = match (&p.pair, p.distance) {
        (Some(_), Some(_)) => return Err(CliError::Validation("give either --pair or --distance".into())),
        (Some(s), None) => Some(parse::point(&m, Some(s), "pair")?),
        (None, Some(d)) => {
            let u = match &dir {
                Some(u) => u.clone(),
                None => parse::direction(&m, &x, "any", seed)?,
            };
            Some(parse::along(&m, &x, &u, d)?)
        }
        (None, None) => None,
    };

    let mut row = Row::new();
    row.push("manifold", m.to_string())
        .push("field", field_label(p))
        .push("method", method)
        .push("variant", if tilde { "tilde" } else { "plain" })
        .push("point", coords(&x.coords));
    match &y {
        Some(y) => {
            row.push("pair", coords(&y.coords)).push("distance", m.distance(&x, y));
        }
        None => {
            let u = match &dir {
                Some(u) => u.clone(),
                None => return Err(CliError::Validation("need --direction, --pair or --distance".into())),
            };
            row.push("direction", coords(&u.components));
        }
    }
    let u = || dir.clone().ok_or_else(|| CliError::Validation("--method limit needs --direction".into()));
    let terms_row = |row: &mut Row, rep: ricci_core::CurvatureReport| {
        row.push("kappa", rep.kappa)
            .push("drift", rep.terms.drift)
            .push("riemann", rep.terms.riemann)
            .push("penalty", rep.terms.penalty);
    };
    match (method, &y) {
        ("formula", Some(y)) => {
            let rep = if tilde { kappa_tilde_pair(&spec, &x, y)? } else { kappa_pair(&spec, &x, y)? };
            terms_row(&mut row, rep);
        }
        ("formula", None) => {
            let u = u()?;
            let rep = if tilde { kappa_tilde_dir(&spec, &x, &u)? } else { kappa_dir(&spec, &x, &u)? };
            terms_row(&mut row, rep);
        }
        ("limit", Some(_)) => {
            return Err(CliError::Validation("--method limit is directional; drop --pair/--distance".into()))
        }
        ("limit", None) => {
            let deltas = match &p.deltas {
                Some(s) => parse::list(s, "deltas")?,
                None => DELTA_LADDER.to_vec(),
            };
            let u = u()?;
            let v = if tilde {
                kappa_tilde_dir_by_limit(&spec, &x, &u, &deltas)?
            } else {
                kappa_dir_by_limit(&spec, &x, &u, &deltas)?
            };
            row.push("kappa", v).push("deltas", coords(&DVector::from_vec(deltas)));
        }
        ("mc", Some(y)) => {
            if tilde {
                return Err(CliError::Validation("--method mc estimates the plain variant only".into()));
            }
            let ladder = match &p.t_ladder {
                Some(s) => parse::list(s, "t-ladder")?,
                None => DIRECT_LADDER.to_vec(),
            };
            let samples = p.samples.unwrap_or(10_000);
            let est = estimate_kappa_direct(&spec, &x, y, &ladder, samples, seed)?;
            row.push("kappa", est.estimate)
                .push("ci_low", est.ci_low)
                .push("ci_high", est.ci_high)
                .push("cut_risk", est.cut_risk)
                .push("samples", samples)
                .push("t_ladder", coords(&DVector::from_vec(ladder)));
            if let Ok(f) = kappa_pair(&spec, &x, y) {
                row.push("kappa_formula", f.kappa).push("covers_formula", est.covers(f.kappa));
            }
        }
        ("mc", None) => return Err(CliError::Validation("--method mc needs --pair or --distance".into())),
        (o, _) => return Err(CliError::Validation(format!("unknown method '{o}' (formula, limit, mc)"))),
    }
    row.push("seed", seed);
    Ok(Table::from_rows(vec![row]))
}

fn coupling(p: &Params) -> Result<Report, CliError> {
    let load = |v: &Option<std::path::PathBuf>, name: &str| parse::matrix(Params::require(v, name)?);
    let (a, b, d) = (load(&p.a, "a")?, load(&p.b, "b")?, load(&p.d, "d")?);
    let a = SymPsd::new(a).map_err(|e| CliError::Validation(format!("A: {e}")))?;
    let b = SymPsd::new(b).map_err(|e| CliError::Validation(format!("B: {e}")))?;
    let d = CostBilinear::new(d).map_err(|e| CliError::Validation(format!("D: {e}")))?;
    let (a, b, d) = (a.matrix(), b.matrix(), d.matrix());
    if d.shape() != (a.nrows(), b.nrows()) {
        return Err(CliError::Validation(format!(
            "D is {}x{} but A, B have sizes {} and {}",
            d.nrows(),
            d.ncols(),
            a.nrows(),
            b.nrows()
        )));
    }
    let c0 = c0_covariance(a, d, b)?;
    let min_value = min_coupling_value(a, d, b)?;
    let seed = p.seed();
    let mut row = Row::new();
    row.push("dim_a", a.nrows())
        .push("dim_b", b.nrows())
        .push("value", c0.value)
        .push("min_value", min_value)
        .push("feasible", c0.feasible)
        .push("min_block_eigenvalue", c0.min_eigenvalue)
        .push("rank_c0", rank(&c0.c))
        .push("rank_adb", rank(&(a * d * b)));
    if let Some(n) = p.samples {
        row.push("samples", n).push("sampled_min_cost", sampled_min_cost(a, b, d, n, seed));
    }
    row.push("seed", seed);
    let cols: Vec<String> = (0..c0.c.ncols()).map(|j| format!("c{j}")).collect();
    let c_rows =
        c0.c.row_iter()
            .map(|r| Row(cols.iter().zip(r.iter()).map(|(k, v)| (k.clone(), (*v).into())).collect()))
            .collect();
    Ok(Report {
        command: "coupling".into(),
        main: Table::from_rows(vec![row]),
        extras: vec![("c0".into(), Table::with_columns(cols.clone(), c_rows))],
        text: None,
    })
}

fn simulate(p: &Params) -> Result<Report, CliError> {
    let m = parse::manifold(p)?;
    let spec = parse::spec(p, &m)?;
    let seed = p.seed();
    let x0 = parse::point(&m, p.x0.as_deref(), "x0")?;
    let y0 = match &p.y0 {
        Some(s) => parse::point(&m, Some(s), "y0")?,
        None => {
            let u = parse::direction(&m, &x0, p.direction.as_deref().unwrap_or("any"), seed)?;
            parse::along(&m, &x0, &u, p.distance.unwrap_or(0.5))?
        }
    };
    let mut cfg = SimConfig::new(p.dt.unwrap_or(1e-3), p.horizon.unwrap_or(0.5), p.paths.unwrap_or(100), seed);
    cfg.noise = parse::noise(p)?;
    cfg.scheme = parse::scheme(p)?;
    cfg.record_stride = p.record_stride.unwrap_or(cfg.record_stride);
    cfg.cut_margin = p.cut_margin.unwrap_or(cfg.cut_margin);
    cfg.validate(&m).map_err(CliError::invalid)?;
    let paths = run_coupled(&spec, &x0, &y0, &cfg)?;
    let (mean_defect, abort_fraction) = defect_summary(&paths);

    let mut detail = Vec::new();
    for (i, path) in paths.iter().enumerate() {
        let status = match &path.aborted {
            None => "ok".to_string(),
            Some(AbortReason::CutLocus { .. }) => "cut_locus".into(),
            Some(AbortReason::Coalesced { .. }) => "coalesced".into(),
            Some(AbortReason::Numerical(_)) => "numerical".into(),
        };
        for (k, (&t, (&l, &ki))) in
            path.times.iter().zip(path.log_distance.iter().zip(&path.kappa_integral)).enumerate()
        {
            let mut r = Row::new();
            r.push("path", i)
                .push("t", t)
                .push("d", l.exp())
                .push("kappa_integral", ki)
                .push("defect", (l - path.log_distance[0] + ki).abs())
                .push("status", if k + 1 == path.times.len() { status.clone() } else { "ok".into() });
            detail.push(r);
        }
    }
    let mut row = Row::new();
    row.push("manifold", m.to_string())
        .push("field", field_label(p))
        .push("x0", coords(&x0.coords))
        .push("y0", coords(&y0.coords))
        .push("d0", m.distance(&x0, &y0))
        .push("dt", cfg.dt)
        .push("horizon", cfg.horizon)
        .push("paths", cfg.trajectories)
        .push("noise", p.noise.clone().unwrap_or_else(|| "two-point".into()))
        .push("scheme", p.scheme.clone().unwrap_or_else(|| "exponential-linear".into()))
        .push("mean_defect", mean_defect)
        .push("abort_fraction", abort_fraction)
        .push("kappa0", kappa_pair(&spec, &x0, &y0).ok().map(|r| r.kappa))
        .push("seed", seed);
    Ok(Report {
        command: "simulate".into(),
        main: Table::from_rows(vec![row]),
        extras: vec![("paths".into(), Table::from_rows(detail))],
        text: None,
    })
}

fn reversible(p: &Params) -> Result<(ModelManifold, Potential, f64, DiffusionSpec), CliError> {
    let m = parse::manifold(p)?;
    let pot = parse::potential(p.potential.as_deref().unwrap_or("0"))?;
    let s = parse::scale(p)?;
    if m.kind != ManifoldKind::Sphere || m.dim > 2 {
        return Err(CliError::Validation(format!("spectral problems need sphere:1:r or sphere:2:r, got {m}")));
    }
    let spec = DiffusionSpec::reversible(m, s, pot.clone()).map_err(CliError::invalid)?;
    Ok((m, pot, s, spec))
}

fn spectrum(p: &Params) -> Result<Table, CliError> {
    let (m, pot, s, spec) = reversible(p)?;
    let grid = p.grid.unwrap_or(512);
    let opr = discretize(&spec, grid)?;
    let (zonal, sector) = spectrum_of(&opr, p.count.unwrap_or(6));
    let rows = zonal
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let mut r = Row::new();
            r.push("manifold", m.to_string())
                .push("potential", pot.to_string())
                .push("scale", s)
                .push("grid", grid)
                .push("index", k)
                .push("eigenvalue", v);
            if let Some(sec) = &sector {
                r.push("sector_eigenvalue", sec[k]);
            }
            r
        })
        .collect();
    Ok(Table::from_rows(rows))
}

fn bounds_row(m: &ModelManifold, pot: &Potential, s: f64, rep: &BoundsReport) -> Row {
    let mut r = Row::new();
    r.push("manifold", m.to_string())
        .push("potential", pot.to_string())
        .push("scale", s)
        .push("grid", rep.grid)
        .push("lambda1", rep.lambda1)
        .push("lambda1_grid", rep.lambda1_grid)
        .push("diameter", rep.diameter)
        .push("ricci_lower", rep.ricci_lower)
        .push("kappa_inf", rep.kappa_inf);
    for (k, v) in rep.bounds() {
        r.push(k, v);
    }
    if let Some((c, _)) = rep.interpolated {
        r.push("interpolated_c", c);
    }
    for cd in &rep.bakry_emery_cd {
        r.push(format!("cd_nprime_{}_c", cd.n_prime), cd.best_c);
    }
    let best = rep.bounds().iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
    r.push("best_bound", (best > f64::NEG_INFINITY).then_some(best))
        .push("dominance_ok", best <= rep.lambda1 + DOMINANCE_TOL);
    r
}

fn bounds(p: &Params) -> Result<Report, CliError> {
    let (m, pot, s, spec) = reversible(p)?;
    let n_primes = match &p.nprime {
        Some(l) => parse::list(l, "nprime")?,
        None => vec![],
    };
    let rep = bounds_report(&spec, p.grid.unwrap_or(512), &n_primes)?;
    let mut text = format!(
        "{m}, potential {pot}, scale {s}, grid {}\n  {:<24} {:>14.10}\n",
        rep.grid, "lambda1 (extrapolated)", rep.lambda1
    );
    for (k, v) in rep.bounds() {
        text.push_str(&format!("  {k:<24} {v:>14.10}\n"));
    }
    Ok(Report {
        command: "bounds".into(),
        main: Table::from_rows(vec![bounds_row(&m, &pot, s, &rep)]),
        extras: vec![],
        text: Some(text),
    })
}

/// Residual of condition (H) and the variation of `A(γ)(g⁻¹γ̇)^⊗2` along
/// random unit-speed geodesics, sampled at nine points of `[0, 1]`.
fn check_h(p: &Params) -> Result<Table, CliError> {
    let m = parse::manifold(p)?;
    let spec = parse::spec(p, &m)?;
    let seed = p.seed();
    let count = p.geodesics.unwrap_or(100);
    if count == 0 {
        return Err(CliError::Validation("--geodesics must be positive".into()));
    }
    let (mut worst, mut variation, mut scale) = (0.0_f64, 0.0_f64, 0.0_f64);
    for i in 0..count {
        let mut r = rng::stream(seed, &[i as u64]);
        let x = random_point(&m, 1.0, &mut r);
        let u = random_unit_tangent(&m, &x, &mut r);
        let mut speeds = Vec::with_capacity(9);
        for k in 0..=8 {
            let (xt, vt) = m.geodesic(&x, &u, k as f64 / 8.0);
            let pt = m.project_point(xt);
            let vt = m.project_tangent(&pt, &vt);
            worst = worst.max(h_residual(&spec, &pt, &vt)?);
            let frame = m.adapted_frame(&pt.coords, &(&vt.components / m.norm(&vt.components)));
            speeds.push(spec.a_frame(&pt.coords, &frame)[(0, 0)]);
        }
        let hi = speeds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = speeds.iter().copied().fold(f64::INFINITY, f64::min);
        variation = variation.max(hi - lo);
        scale = scale.max(hi.abs());
    }
    let tol = H_TOL * scale.max(1.0);
    let mut row = Row::new();
    row.push("manifold", m.to_string())
        .push("field", field_label(p))
        .push("geodesics", count)
        .push("max_residual", worst)
        .push("max_speed_variation", variation)
        .push("tolerance", tol)
        .push("satisfies_h", worst <= tol)
        .push("seed", seed);
    Ok(Table::from_rows(vec![row]))
}

fn variance(p: &Params) -> Result<Table, CliError> {
    let m = parse::manifold(p)?;
    let samples = p.samples.unwrap_or(100_000);
    let function = p.function.as_deref().unwrap_or("distance");
    let pole = m.pole();
    let n = m.dim;
    let dist = |x: &DVector<f64>| m.distance_raw(x, &pole.coords);
    let height = |x: &DVector<f64>| x[n];
    let f: &(dyn Fn(&DVector<f64>) -> f64 + Sync) = match function {
        "distance" => &dist,
        "height" => &height,
        o => return Err(CliError::Validation(format!("unknown function '{o}' (distance, height)"))),
    };
    if m.kind != ManifoldKind::Sphere || m.dim < 2 {
        return Err(CliError::Validation(format!("variance needs a sphere of dimension at least 2, got {m}")));
    }
    let seed = p.seed();
    let v = lipschitz_variance_check(&m, f, samples, seed)?;
    let mut row = Row::new();
    row.push("manifold", m.to_string())
        .push("function", function)
        .push("samples", samples)
        .push("variance", v.variance)
        .push("std_error", v.std_error)
        .push("bound", v.bound)
        .push("holds", v.holds())
        .push("seed", seed);
    Ok(Table::from_rows(vec![row]))
}

const SWEEP_COLUMNS: [&str; 4] = ["index", "command", "error", "error_kind"];

/// Runs every config of the list (in parallel) and stacks their report rows
/// in input order. Failures become error columns.
fn sweep(p: &Params) -> Result<Table, CliError> {
    let path = Params::require(&p.list, "list")?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read list {}: {e}", path.display())))?;
    let entries: Vec<Value> = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("list {} must be a JSON array: {e}", path.display())))?;
    let results: Vec<Vec<Row>> = entries.into_par_iter().enumerate().map(|(i, e)| sweep_entry(i, e)).collect();
    let columns = SWEEP_COLUMNS.iter().map(|s| s.to_string()).collect();
    Ok(Table::with_columns(columns, results.into_iter().flatten().collect()))
}

fn sweep_entry(index: usize, entry: Value) -> Vec<Row> {
    let mut command = String::new();
    let outcome = (|| {
        let Value::Object(obj) = entry else {
            return Err(CliError::Validation("entry is not a JSON object".into()));
        };
        let params = Params::from_object(obj)?;
        command = Params::require(&params.command, "command")?.clone();
        if command == "sweep" {
            return Err(CliError::Validation("sweeps do not nest".into()));
        }
        run(&command, &params)
    })();
    let head = |err: Option<&CliError>| {
        let mut r = Row::new();
        r.push("index", index)
            .push("command", command.clone())
            .push("error", err.map(CliError::message))
            .push("error_kind", err.map(|e| e.kind().to_string()));
        r
    };
    match outcome {
        Ok(rep) => rep
            .main
            .rows
            .into_iter()
            .map(|row| {
                let mut r = head(None);
                r.0.extend(row.0);
                r
            })
            .collect(),
        Err(e) => vec![head(Some(&e))],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const COMMANDS: [&str; 8] = ["kappa", "coupling", "simulate", "spectrum", "bounds", "check-h", "variance", "sweep"];

    #[test]
    fn every_command_is_dispatched() {
        for c in COMMANDS {
            let err = run(c, &Params::default()).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{c}: {}", err.message());
        }
        assert!(matches!(run("nope", &Params::default()), Err(CliError::Validation(_))));
    }

    #[test]
    fn unit_sphere_directional_kappa() {
        let p = Params {
            manifold: Some("sphere:2:1".into()),
            field: Some("brownian".into()),
            direction: Some("any".into()),
            ..Default::default()
        };
        let t = kappa(&p).unwrap();
        let Some(crate::report::Cell::Num(k)) = t.rows[0].get("kappa") else { panic!() };
        assert!((k - 0.5).abs() < 1e-12);
    }
}
