mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use ricci_core::curvature::*;
use ricci_core::fields::RiemannLikeTensor;
use ricci_core::{DiffusionField, DiffusionSpec, DriftField, Error, ManifoldKind, ModelManifold, Potential};

fn tensor_dim(m: &ModelManifold) -> usize {
    m.ambient_dim() + usize::from(m.kind == ManifoldKind::Euclidean)
}

/// Condition-(H) field: a nonnegative tensor field plus a multiple of the
/// inverse metric, so that it has full rank.
fn h_field(m: &ModelManifold, seed: u64) -> DiffusionField {
    let t = RiemannLikeTensor::random_nonnegative(tensor_dim(m), 2, seed);
    DiffusionField::Sum(vec![DiffusionField::Example(t.scale(0.3)), DiffusionField::Metric(0.5)])
}

fn zonal_drift(scale: f64) -> DriftField {
    DriftField::Gradient { potential: Potential::Zonal(vec![0.0, 0.4, 0.2]), scale }
}

/// `(n−1)/R² · R tan(d/2R)/d`: both the Hessian of distance and the mixed
/// term are explicit on round spheres.
fn sphere_pair_oracle(n: usize, r: f64, d: f64) -> f64 {
    let theta = d / r;
    let h = (theta.cos() / theta.sin()) / r;
    let k = 1.0 / (r * theta.sin());
    (n as f64 - 1.0) * (k - h) / d
}

#[test]
fn brownian_sphere_pairs_match_closed_form() {
    for (n, r) in [(2, 1.0), (3, 1.7), (4, 0.6)] {
        let m = ModelManifold::sphere(n, r);
        let spec = DiffusionSpec::brownian(m);
        for (i, frac) in [0.05, 0.3, 0.7, 0.95].iter().enumerate() {
            let d = frac * std::f64::consts::PI * r;
            let x = point(&m, 10 + i as u64);
            let y = partner(&m, &x, d, 20 + i as u64);
            let k = kappa_pair(&spec, &x, &y).unwrap().kappa;
            let expect = sphere_pair_oracle(n, r, d);
            assert!(rel_err(k, expect) < 1e-9, "n={n} d={d}: {k} vs {expect}");
        }
    }
    // tan(1/4)/(1/2) for the unit 2-sphere at distance one half.
    let m = ModelManifold::sphere(2, 1.0);
    let x = point(&m, 3);
    let y = partner(&m, &x, 0.5, 4);
    let k = kappa_pair(&DiffusionSpec::brownian(m), &x, &y).unwrap().kappa;
    assert!((k - 0.25f64.tan() / 0.5).abs() < 1e-12);
}

#[test]
fn directional_values_on_model_spaces() {
    let cases = [
        (ModelManifold::sphere(2, 1.0), 0.5),
        (ModelManifold::sphere(3, 1.0), 1.0),
        (ModelManifold::sphere(3, 2.0), 0.25),
        (ModelManifold::hyperbolic(2, 1.0), -0.5),
        (ModelManifold::hyperbolic(3, 0.5), -4.0),
        (ModelManifold::euclidean(3), 0.0),
    ];
    for (m, expect) in cases {
        let spec = DiffusionSpec::brownian(m);
        for seed in 0..5 {
            let x = point(&m, seed);
            let u = unit(&m, &x, seed + 100);
            let k = kappa_dir(&spec, &x, &u).unwrap().kappa;
            assert!((k - expect).abs() < 1e-10, "{m}: {k} vs {expect}");
        }
    }
}

#[test]
fn ornstein_uhlenbeck_is_exactly_its_rate() {
    let m = ModelManifold::euclidean(3);
    let spec = DiffusionSpec::ornstein_uhlenbeck(m, 1.0).unwrap();
    for seed in 0..5 {
        let x = point(&m, seed);
        let y = partner(&m, &x, 0.3 + seed as f64, seed + 7);
        assert!((kappa_pair(&spec, &x, &y).unwrap().kappa - 1.0).abs() < 1e-12);
        let u = unit(&m, &x, seed + 9);
        assert!((kappa_dir(&spec, &x, &u).unwrap().kappa - 1.0).abs() < 1e-12);
    }
    let spec = DiffusionSpec::ornstein_uhlenbeck(m, 2.5).unwrap();
    let x = point(&m, 1);
    assert!((kappa_min(&spec, &x).unwrap() - 2.5).abs() < 1e-12);
}

#[test]
fn reversible_direction_is_half_ricci_plus_hessian() {
    let m = ModelManifold::sphere(2, 1.3);
    let pot = Potential::Zonal(vec![0.1, 0.5, -0.3]);
    let s = 0.8;
    let spec = DiffusionSpec::reversible(m, s, pot.clone()).unwrap();
    for seed in 0..5 {
        let x = point(&m, seed);
        let u = unit(&m, &x, seed + 50);
        let frame = m.frame(&x.coords);
        let hess = pot.hessian_frame(&m, &x.coords, &frame);
        let uf = m.to_frame(&frame, &u.components);
        let ric = m.curvature() * (m.dim as f64 - 1.0);
        let expect = 0.5 * s * (ric + (uf.transpose() * &hess * &uf)[(0, 0)]);
        let k = kappa_dir(&spec, &x, &u).unwrap().kappa;
        assert!((k - expect).abs() < 1e-10, "{k} vs {expect}");
        // Minimum over directions is the smallest eigenvalue of the same form.
        let q = (hess.clone() + DMatrix::identity(2, 2) * ric) * (0.5 * s);
        let lo = q.symmetric_eigen().eigenvalues.min();
        assert!((kappa_min(&spec, &x).unwrap() - lo).abs() < 1e-10);
    }
}

#[test]
fn directional_value_is_the_limit_of_pair_values() {
    let mut specs = vec![];
    for m in model_spaces() {
        specs.push(DiffusionSpec::brownian(m));
        specs.push(DiffusionSpec::new(m, h_field(&m, 5), DriftField::Zero).unwrap());
        let slope = gaussian_vector(m.ambient_dim(), 8) * 0.1;
        let conformal = DiffusionField::Conformal { base: 2.0, slope };
        if m.kind != ManifoldKind::Hyperbolic {
            specs.push(DiffusionSpec::new(m, conformal, DriftField::Zero).unwrap());
        }
    }
    specs.push(
        DiffusionSpec::new(ModelManifold::sphere(2, 1.0), h_field(&ModelManifold::sphere(2, 1.0), 6), zonal_drift(1.0))
            .unwrap(),
    );
    specs.push(DiffusionSpec::ornstein_uhlenbeck(ModelManifold::euclidean(2), 0.7).unwrap());
    for (i, spec) in specs.iter().enumerate() {
        let m = spec.manifold;
        let x = point(&m, 30 + i as u64);
        let u = unit(&m, &x, 60 + i as u64);
        let exact = kappa_dir(spec, &x, &u).unwrap().kappa;
        // Fields on H² grow with the distance from the pole, so the default
        // ladder is too coarse for the pinned tolerance.
        let lim = kappa_dir_by_limit(spec, &x, &u, &[0.02, 0.01, 0.005]).unwrap();
        assert!((exact - lim).abs() < 1e-5 * exact.abs().max(1.0), "{spec:?}: {exact} vs {lim}");
    }
}

#[test]
fn derivative_penalty_is_non_positive_and_frame_invariant() {
    let n = 4;
    let a = spd(n, 1);
    let e = {
        let g = gaussian_matrix(n, n, 2);
        (&g + g.transpose()) * 0.5
    };
    let p = quotient_penalty(&a, &e);
    assert!(p <= 0.0);
    let q = gaussian_matrix(n, n, 3).qr().q();
    let p_rot = quotient_penalty(&(q.transpose() * &a * &q), &(q.transpose() * &e * &q));
    assert!((p - p_rot).abs() < 1e-10 * p.abs().max(1.0));
    assert_eq!(quotient_penalty(&a, &DMatrix::zeros(n, n)), 0.0);
    // Scalar case: −E²/(8a) from differentiating √a.
    let scalar = quotient_penalty(&DMatrix::from_element(1, 1, 2.0), &DMatrix::from_element(1, 1, 1.0));
    assert!(scalar < 0.0);
    // Homogeneous of degree one in (A, E).
    let twice = quotient_penalty(&(&a * 2.0), &(&e * 2.0));
    assert!((twice - 2.0 * p).abs() < 1e-10 * p.abs().max(1.0));
}

#[test]
fn variance_cancelling_matches_plain_for_metric_diffusions() {
    for m in model_spaces() {
        let spec = DiffusionSpec::new(m, DiffusionField::Metric(1.3), DriftField::Zero).unwrap();
        for seed in 0..3 {
            let x = point(&m, seed);
            let u = unit(&m, &x, seed + 4);
            let a = kappa_dir(&spec, &x, &u).unwrap().kappa;
            let b = kappa_tilde_dir(&spec, &x, &u).unwrap().kappa;
            assert!((a - b).abs() < 1e-10, "{m}: {a} vs {b}");
            let y = partner(&m, &x, 0.4, seed + 8);
            let a = kappa_pair(&spec, &x, &y).unwrap().kappa;
            let b = kappa_tilde_pair(&spec, &x, &y).unwrap().kappa;
            assert!((a - b).abs() < 1e-10, "{m}: {a} vs {b}");
        }
    }
}

#[test]
fn variance_cancelling_limit_with_drift() {
    let cases: Vec<DiffusionSpec> = vec![
        DiffusionSpec::new(
            ModelManifold::sphere(2, 1.0),
            h_field(&ModelManifold::sphere(2, 1.0), 11),
            zonal_drift(0.7),
        )
        .unwrap(),
        DiffusionSpec::new(
            ModelManifold::sphere(3, 1.2),
            h_field(&ModelManifold::sphere(3, 1.2), 12),
            zonal_drift(1.5),
        )
        .unwrap(),
        DiffusionSpec::new(
            ModelManifold::euclidean(2),
            h_field(&ModelManifold::euclidean(2), 13),
            DriftField::Linear(0.6),
        )
        .unwrap(),
        DiffusionSpec::new(
            ModelManifold::hyperbolic(2, 1.0),
            h_field(&ModelManifold::hyperbolic(2, 1.0), 14),
            DriftField::Zero,
        )
        .unwrap(),
    ];
    for (i, spec) in cases.iter().enumerate() {
        let m = spec.manifold;
        let x = point(&m, 40 + i as u64);
        let u = unit(&m, &x, 80 + i as u64);
        let exact = kappa_tilde_dir(spec, &x, &u).unwrap();
        let lim = kappa_tilde_dir_by_limit(spec, &x, &u, &DELTA_LADDER).unwrap();
        assert!((exact.kappa - lim).abs() < 1e-4 * exact.kappa.abs().max(1.0), "{m}: {} vs {lim}", exact.kappa);
        // Cancelling variance can only lower the value.
        let plain = kappa_dir(spec, &x, &u).unwrap().kappa;
        assert!(exact.kappa <= plain + 1e-9);
        assert!(exact.terms.penalty <= 1e-12);
    }
}

#[test]
fn condition_h_holds_for_tensor_fields() {
    for m in model_spaces() {
        let field = h_field(&m, 21);
        let spec = DiffusionSpec::new(m, field, DriftField::Zero).unwrap();
        for seed in 0..5 {
            let x = point(&m, seed);
            let u = unit(&m, &x, seed + 3);
            let r = h_residual(&spec, &x, &u).unwrap();
            assert!(r < 1e-9, "{m}: residual {r}");
        }
    }
}

#[test]
fn speed_along_geodesics_is_constant() {
    for m in model_spaces() {
        let spec = DiffusionSpec::new(m, h_field(&m, 22), DriftField::Zero).unwrap();
        let x = point(&m, 1);
        let u = unit(&m, &x, 2);
        let values: Vec<f64> = [0.0, 0.2, 0.5, 0.9]
            .iter()
            .map(|&t| {
                let (p, v) = m.geodesic(&x.coords, &u.components, t);
                let frame = m.adapted_frame(&p, &v);
                spec.a_frame(&p, &frame)[(0, 0)]
            })
            .collect();
        for v in &values {
            assert!((v - values[0]).abs() < 1e-10 * values[0].abs().max(1.0), "{m}: {values:?}");
        }
    }
}

#[test]
fn conformal_fields_violate_condition_h() {
    let m = ModelManifold::euclidean(2);
    let slope = DVector::from_vec(vec![0.1, 0.0]);
    let spec = DiffusionSpec::new(m, DiffusionField::Conformal { base: 1.0, slope }, DriftField::Zero).unwrap();
    let x = m.point(DVector::from_vec(vec![0.3, -0.2])).unwrap();
    let u = m.tangent(&x, DVector::from_vec(vec![1.0, 0.0])).unwrap();
    assert!(h_residual(&spec, &x, &u).unwrap() > 1e-3);
    assert!(matches!(kappa_tilde_dir(&spec, &x, &u), Err(Error::HViolation { .. })));
    let y = m.point(DVector::from_vec(vec![1.3, -0.2])).unwrap();
    assert!(matches!(kappa_tilde_pair(&spec, &x, &y), Err(Error::HViolation { .. })));
    // The plain curvature pays a strictly negative derivative penalty.
    assert!(kappa_dir(&spec, &x, &u).unwrap().terms.penalty < 0.0);
}

#[test]
fn black_box_field_agrees_with_analytic_field() {
    let m = ModelManifold::sphere(2, 1.0);
    let t = RiemannLikeTensor::random_nonnegative(3, 2, 31);
    let analytic = DiffusionField::Sum(vec![DiffusionField::Example(t), DiffusionField::Metric(0.5)]);
    let inner = analytic.clone();
    let custom = DiffusionField::Custom(std::sync::Arc::new(move |x: &DVector<f64>| {
        // Ambient tensor Σ E_a A_ab E_bᵀ for any orthonormal tangent frame.
        let e = m.frame(x);
        let a = inner.frame_matrix(&m, x, &e);
        &e * a * e.transpose()
    }));
    let sa = DiffusionSpec::new(m, analytic, DriftField::Zero).unwrap();
    let sc = DiffusionSpec::new(m, custom, DriftField::Zero).unwrap();
    for seed in 0..3 {
        let x = point(&m, seed);
        let u = unit(&m, &x, seed + 5);
        let a = kappa_dir(&sa, &x, &u).unwrap().kappa;
        let c = kappa_dir(&sc, &x, &u).unwrap().kappa;
        assert!((a - c).abs() < 1e-6, "{a} vs {c}");
    }
}

#[test]
fn singular_diffusion_is_rejected() {
    let m = ModelManifold::sphere(2, 1.0);
    let spec = DiffusionSpec::new(m, DiffusionField::Metric(0.0), DriftField::Zero).unwrap();
    let x = point(&m, 1);
    let u = unit(&m, &x, 2);
    assert!(matches!(kappa_dir(&spec, &x, &u), Err(Error::SingularDiffusion { .. })));
}

#[test]
fn antipodal_pairs_are_rejected() {
    let m = ModelManifold::sphere(2, 1.0);
    let x = point(&m, 1);
    let y = m.point(-&x.coords).unwrap();
    let spec = DiffusionSpec::brownian(m);
    assert!(matches!(kappa_pair(&spec, &x, &y), Err(Error::CutLocus { .. })));
}

#[test]
fn square_root_perturbation_is_second_order_accurate() {
    let n = 4;
    let mm = spd(n, 41);
    let nn = {
        let g = gaussian_matrix(n, n, 42);
        (&g + g.transpose()) * 0.5
    };
    let (th, tk) = sqrt_perturbation_traces(&mm, &nn).unwrap();
    let exact = |eps: f64| -> f64 {
        let s = &mm * &mm + &nn * eps;
        s.symmetric_eigen().eigenvalues.iter().map(|l| l.sqrt()).sum()
    };
    let tr_m = mm.trace();
    let err = |eps: f64| (exact(eps) - tr_m - eps * th - eps * eps * tk).abs();
    let (e1, e2) = (err(1e-2), err(5e-3));
    let ratio = e1 / e2;
    assert!(ratio > 6.0 && ratio < 10.0, "third-order ratio {ratio} ({e1}, {e2})");
    // Commuting case: H = N/(2M), K = −N²/(8M³).
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
    let nd = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -1.0]));
    let (h, k) = sqrt_perturbation_traces(&d, &nd).unwrap();
    assert!((h - (0.25 - 0.25)).abs() < 1e-15);
    assert!((k - (-0.25 / 8.0 - 1.0 / 64.0)).abs() < 1e-15);
    assert!(sqrt_perturbation_traces(&d, &DMatrix::zeros(3, 3)).is_err());
}

#[test]
fn direct_estimate_covers_flat_brownian_value() {
    let m = ModelManifold::euclidean(2);
    let spec = DiffusionSpec::brownian(m);
    let x = m.point(DVector::from_vec(vec![0.0, 0.0])).unwrap();
    let y = m.point(DVector::from_vec(vec![1.0, 0.0])).unwrap();
    let est = estimate_kappa_direct(&spec, &x, &y, &[0.05, 0.025], 2000, 7).unwrap();
    assert_eq!(est.batch_values.len(), 4);
    assert!(est.covers(0.0), "{est:?}");
    assert!(est.ci_low < est.estimate && est.estimate < est.ci_high);
    let again = estimate_kappa_direct(&spec, &x, &y, &[0.05, 0.025], 2000, 7).unwrap();
    assert_eq!(est.estimate.to_bits(), again.estimate.to_bits());
}

proptest! {
    #![proptest_config(prop_config(48))]

    #[test]
    fn pair_value_is_symmetric(space in 0usize..6, seed in 0u64..1_000_000, frac in 0.05f64..0.9) {
        let m = model_spaces()[space];
        let spec = DiffusionSpec::new(m, h_field(&m, seed), DriftField::Zero).unwrap();
        let d = frac * m.cut_limit().min(3.0);
        let x = point(&m, seed);
        let y = partner(&m, &x, d, seed + 1);
        let a = kappa_pair(&spec, &x, &y).unwrap();
        let b = kappa_pair(&spec, &y, &x).unwrap();
        prop_assert!((a.kappa - b.kappa).abs() < 1e-9 * a.kappa.abs().max(1.0));
        prop_assert!(a.terms.penalty == 0.0);
    }

    #[test]
    fn variance_cancelling_never_exceeds_plain(space in 0usize..6, seed in 0u64..1_000_000, frac in 0.05f64..0.9) {
        let m = model_spaces()[space];
        let spec = DiffusionSpec::new(m, h_field(&m, seed), DriftField::Zero).unwrap();
        let d = frac * m.cut_limit().min(3.0);
        let x = point(&m, seed);
        let y = partner(&m, &x, d, seed + 1);
        let plain = kappa_pair(&spec, &x, &y).unwrap().kappa;
        let tilde = kappa_tilde_pair(&spec, &x, &y).unwrap().kappa;
        prop_assert!(tilde <= plain + 1e-9 * plain.abs().max(1.0), "{} > {}", tilde, plain);
    }

    #[test]
    fn directional_penalty_is_non_positive(space in 0usize..6, seed in 0u64..1_000_000) {
        let m = model_spaces()[space];
        let slope = gaussian_vector(m.ambient_dim(), seed) * 0.05;
        let field = DiffusionField::Sum(vec![h_field(&m, seed), DiffusionField::Conformal { base: 1.0, slope }]);
        let spec = DiffusionSpec::new(m, field, DriftField::Zero).unwrap();
        let x = point(&m, seed);
        let u = unit(&m, &x, seed + 2);
        if let Ok(r) = kappa_dir(&spec, &x, &u) {
            prop_assert!(r.terms.penalty <= 1e-14);
        }
    }
}
