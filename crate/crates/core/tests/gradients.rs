mod common;

use artl::data::Dataset;
use artl::diff::{grad_scalar, hovr_term_grad, input_derivative, Scalar};
use artl::hovr::HovrSpec;
use artl::losses::{AugmentedState, TrimSpec};
use artl::model::{forward, forward_generic, Activation, DomainBox, ParamVector};
use artl::optimizer::sgsd_step;
use common::*;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CASES: usize = 100;
const TOL: f64 = 1e-4;

fn activation(case: usize) -> Activation {
    if case % 2 == 0 {
        Activation::Tanh
    } else {
        Activation::Sigmoid
    }
}

#[test]
fn sum_of_squares_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let theta: Vec<f64> = (0..10).map(|_| rng.random_range(-3.0..3.0)).collect();
    let g = grad_scalar(
        |v| v.iter().skip(1).fold(v[0] * v[0], |acc, &x| acc + x * x),
        &theta,
    )
    .unwrap();
    let f = |t: &[f64]| t.iter().map(|x| x * x).sum::<f64>();
    for i in 0..theta.len() {
        let mut p = theta.clone();
        let mut m = theta.clone();
        p[i] += 1e-5;
        m[i] -= 1e-5;
        let fd = (f(&p) - f(&m)) / 2e-5;
        assert!(rel_err(g[i], fd) <= 1e-6, "coordinate {i}: {} vs {fd}", g[i]);
    }
}

#[test]
fn first_input_derivatives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for case in 0..CASES {
        let dim = rng.random_range(1..=3);
        let (arch, theta) = random_net(&mut rng, dim, activation(case));
        let x = random_point(&mut rng, dim);
        let i = rng.random_range(0..dim);
        let exact = input_derivative(&theta, &arch, &x, &[i]).unwrap();
        let fd = fd_first(&net_fn(&arch, &theta), &x, i, 1e-3);
        worst = worst.max(rel_err(exact, fd));
    }
    assert!(worst <= TOL, "worst relative error {worst:e}");
}

#[test]
fn second_input_derivatives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for case in 0..CASES {
        let dim = rng.random_range(2..=3);
        let (arch, theta) = random_net(&mut rng, dim, activation(case));
        let x = random_point(&mut rng, dim);
        let i = rng.random_range(0..dim);
        // Alternate pure and mixed second derivatives.
        let j = if case % 3 == 0 { i } else { (i + 1) % dim };
        let exact = input_derivative(&theta, &arch, &x, &[i, j]).unwrap();
        let fd = fd_second(&net_fn(&arch, &theta), &x, i, j, 1e-2);
        worst = worst.max(rel_err(exact, fd));
    }
    assert!(worst <= TOL, "worst relative error {worst:e}");
}

#[test]
fn tanh_curvature_matches_second_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let arch = artl::model::MlpArchitecture::new(2, vec![4], Activation::Tanh).unwrap();
    let values = (0..arch.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let theta = ParamVector::from_values(&arch, values).unwrap();
    let x = [0.3, -0.7];
    let f = net_fn(&arch, &theta);
    let h = 1e-3;
    let fd = (f(&[x[0] + h, x[1]]) - 2.0 * f(&x) + f(&[x[0] - h, x[1]])) / (h * h);
    let exact = input_derivative(&theta, &arch, &x, &[0, 0]).unwrap();
    assert!(rel_err(exact, fd) <= 1e-4, "{exact} vs {fd}");
}

fn random_dataset<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Dataset {
    let x = Array2::from_shape_fn((n, dim), |_| rng.random_range(-2.0..2.0));
    let y = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    Dataset::new(x, y, vec![false; n], DomainBox::cube(dim, -2.0, 2.0).unwrap(), "random").unwrap()
}

/// `(1/n)(‖y − f_θ(X) − ξ‖² + ‖ξ‖²)` in plain arithmetic.
fn augmented_loss(theta: &ParamVector, arch: &artl::model::MlpArchitecture, data: &Dataset, xi: &[f64]) -> f64 {
    let n = data.len() as f64;
    (0..data.len())
        .map(|i| {
            let f = forward(theta, arch, data.row(i).as_slice().unwrap()).unwrap();
            let g = data.y()[i] - f - xi[i];
            g * g + xi[i] * xi[i]
        })
        .sum::<f64>()
        / n
}

#[test]
fn augmented_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_tape: f64 = 0.0;
    let mut worst_step: f64 = 0.0;
    for case in 0..CASES {
        let dim = rng.random_range(1..=3);
        let n = rng.random_range(3..=12);
        let (arch, theta) = random_net(&mut rng, dim, activation(case));
        let data = random_dataset(&mut rng, n, dim);
        let xi: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();

        let objective = |t: &[f64]| {
            let p = ParamVector::from_values(&arch, t.to_vec()).unwrap();
            augmented_loss(&p, &arch, &data, &xi)
        };
        let fd = fd_gradient(&objective, theta.as_slice(), 1e-4);

        let tape = grad_scalar(
            |v| {
                let nf = v[0].lift(n as f64);
                let mut total = v[0].lift(0.0);
                for i in 0..n {
                    let x: Vec<_> = data.row(i).iter().map(|&c| v[0].lift(c)).collect();
                    let f = forward_generic(v, &arch, &x).unwrap();
                    let g = v[0].lift(data.y()[i] - xi[i]) - f;
                    total = total + g * g;
                }
                let xi_sq: f64 = xi.iter().map(|x| x * x).sum();
                (total + v[0].lift(xi_sq)) * v[0].lift(1.0 / nf.primal())
            },
            theta.as_slice(),
        )
        .unwrap();
        worst_tape = worst_tape.max(max_rel_err_vec(&tape, &fd));

        // The optimizer's θ-direction with λ = 0 is the same gradient.
        let spec = HovrSpec::diagonal(1, 2.0, 0.0, data.domain().clone(), 1).unwrap();
        let state = AugmentedState {
            theta: theta.clone(),
            xi: xi.clone(),
        };
        let next = sgsd_step(&state, &data, &arch, TrimSpec::new(n, n).unwrap(), &spec, 1.0, &mut rng).unwrap();
        let step: Vec<f64> = theta
            .as_slice()
            .iter()
            .zip(next.theta.as_slice())
            .map(|(a, b)| a - b)
            .collect();
        worst_step = worst_step.max(max_rel_err_vec(&step, &fd));
    }
    assert!(worst_tape <= TOL, "tape route: worst relative error {worst_tape:e}");
    assert!(worst_step <= TOL, "optimizer route: worst relative error {worst_step:e}");
}

#[test]
fn hovr_term_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for case in 0..CASES {
        let dim = rng.random_range(1..=3);
        let (arch, theta) = random_net(&mut rng, dim, activation(case));
        let z = random_point(&mut rng, dim);
        let k = 1 + case % 2;
        let mi: Vec<usize> = (0..k).map(|_| rng.random_range(0..dim)).collect();
        let q = [2.0, 1.5, 3.0][case % 3];
        let term = hovr_term_grad(&theta, &arch, &z, &mi, q).unwrap();
        let objective = |t: &[f64]| {
            let p = ParamVector::from_values(&arch, t.to_vec()).unwrap();
            input_derivative(&p, &arch, &z, &mi).unwrap().abs().powf(q)
        };
        let fd = fd_gradient(&objective, theta.as_slice(), 1e-4);
        worst = worst.max(max_rel_err_vec(&term.grad, &fd));
    }
    assert!(worst <= TOL, "worst relative error {worst:e}");
}
