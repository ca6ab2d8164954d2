//! Finite-difference oracles and random fixtures shared by integration tests.
//!
//! Everything here evaluates the network only through plain `f64` forward
//! passes, so it stays independent of the jet and tape machinery under test.

#![allow(dead_code)]

use artl::model::{forward, Activation, MlpArchitecture, ParamVector};
use rand::Rng;

/// `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Richardson-extrapolated central difference of `f` at `x` along `e_i`.
pub fn fd_first(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let central = |h: f64| {
        let mut p = x.to_vec();
        let mut m = x.to_vec();
        p[i] += h;
        m[i] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    };
    (4.0 * central(h / 2.0) - central(h)) / 3.0
}

/// Richardson-extrapolated second difference: pure when `i == j`, the
/// four-point cross stencil otherwise.
pub fn fd_second(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, j: usize, h: f64) -> f64 {
    let at = |di: f64, dj: f64| {
        let mut p = x.to_vec();
        p[i] += di;
        p[j] += dj;
        f(&p)
    };
    let stencil = |h: f64| {
        if i == j {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            (f(&p) - 2.0 * f(x) + f(&m)) / (h * h)
        } else {
            (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h)
        }
    };
    (4.0 * stencil(h / 2.0) - stencil(h)) / 3.0
}

/// Small random network with weights spread wider than Glorot so that
/// curvature is visible.
pub fn random_net<R: Rng>(rng: &mut R, input_dim: usize, activation: Activation) -> (MlpArchitecture, ParamVector) {
    let depth = rng.random_range(1..=2);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=5)).collect();
    let arch = MlpArchitecture::new(input_dim, hidden, activation).unwrap();
    let values = (0..arch.num_params()).map(|_| rng.random_range(-1.5..1.5)).collect();
    let theta = ParamVector::from_values(&arch, values).unwrap();
    (arch, theta)
}

pub fn random_point<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// `x ↦ f_θ(x)` through the plain forward pass.
pub fn net_fn<'a>(arch: &'a MlpArchitecture, theta: &'a ParamVector) -> impl Fn(&[f64]) -> f64 + 'a {
    move |x: &[f64]| forward(theta, arch, x).unwrap()
}

/// Central-difference gradient over every coordinate.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len()).map(|i| fd_first(f, x, i, h)).collect()
}

/// Largest relative error between two gradients, measured against the
/// larger of the two norms so tiny coordinates do not dominate.
pub fn max_rel_err_vec(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = a
        .iter()
        .chain(b)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-8);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / scale)
        .fold(0.0, f64::max)
}
