#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use ricci_core::fields::{random_point, random_unit_tangent};
use ricci_core::{rng, ModelManifold, Point, TangentVector};

pub fn model_spaces() -> Vec<ModelManifold> {
    vec![
        ModelManifold::euclidean(2),
        ModelManifold::euclidean(3),
        ModelManifold::sphere(2, 1.0),
        ModelManifold::sphere(3, 1.7),
        ModelManifold::hyperbolic(2, 1.0),
        ModelManifold::hyperbolic(3, 0.8),
    ]
}

pub fn point(m: &ModelManifold, seed: u64) -> Point {
    let mut r = rng::stream(seed, &[11]);
    m.project_point(random_point(m, 0.8, &mut r))
}

pub fn unit(m: &ModelManifold, x: &Point, seed: u64) -> TangentVector {
    let mut r = rng::stream(seed, &[12]);
    m.tangent(x, random_unit_tangent(m, &x.coords, &mut r)).unwrap()
}

/// Point at distance `d` from `x` in a random direction.
pub fn partner(m: &ModelManifold, x: &Point, d: f64, seed: u64) -> Point {
    let u = unit(m, x, seed);
    m.exp_map(x, &m.tangent(x, &u.components * d).unwrap())
}

pub fn spd(n: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng::stream(seed, &[13]);
    let g = DMatrix::from_fn(n, n, |_, _| r.sample::<f64, _>(StandardNormal));
    &g * g.transpose() / n as f64 + DMatrix::identity(n, n) * 0.1
}

pub fn gaussian_matrix(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng::stream(seed, &[14]);
    DMatrix::from_fn(n, m, |_, _| r.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_vector(n: usize, seed: u64) -> DVector<f64> {
    let mut r = rng::stream(seed, &[15]);
    DVector::from_fn(n, |_, _| r.sample::<f64, _>(StandardNormal))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn prop_config(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config { cases, failure_persistence: None, ..Default::default() }
}
