//! Differentiation engine.
//!
//! Input derivatives `∂^k f_θ / ∂x_{i1}..∂x_{ik}` (k ≤ 2) come from forward
//! jets pushed through the network; parameter gradients come from a reverse
//! sweep over the recorded operations. Two routes are provided: a scalar
//! tape ([`Tape`]) that nests with the jet types, and a batched engine
//! ([`batch`]) that records whole layers and is used for training.

pub mod batch;
mod jet;
mod tape;

use std::ops::{Add, Mul, Neg, Sub};

use ndarray::Array2;

pub use jet::{BiJet, Jet2};
pub use tape::{OpKind, Tape, TapeNode, Var};

use crate::error::{Error, Result};
use crate::model::{forward_generic, forward_unchecked, MlpArchitecture, ParamVector};
use batch::StreamPlan;

/// Number-like types the network can be evaluated over.
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    /// A constant living in the same context as `self` (same tape, zero derivatives).
    fn lift(&self, c: f64) -> Self;
    fn primal(&self) -> f64;
    fn sigmoid(self) -> Self;
    fn tanh(self) -> Self;
}

impl Scalar for f64 {
    fn lift(&self, c: f64) -> Self {
        c
    }

    fn primal(&self) -> f64 {
        *self
    }

    fn sigmoid(self) -> Self {
        crate::model::sigmoid(self)
    }

    fn tanh(self) -> Self {
        f64::tanh(self)
    }
}

/// Gradient of a scalar objective of `θ`, by one reverse sweep.
pub fn grad_scalar<F>(objective: F, theta: &[f64]) -> Result<Vec<f64>>
where
    F: for<'t> Fn(&[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars = tape.vars(theta);
    let out = objective(&vars);
    tape.gradient(out, &vars)
}

fn check_multi_index(multi_index: &[usize], input_dim: usize) -> Result<()> {
    if multi_index.len() > 2 {
        return Err(Error::UnsupportedOrder(multi_index.len()));
    }
    if let Some(&bad) = multi_index.iter().find(|&&i| i >= input_dim) {
        return Err(Error::input(format!(
            "coordinate index {} out of range 1..={input_dim}",
            bad + 1
        )));
    }
    Ok(())
}

/// `∂^k f_θ(x) / ∂x_{i1}..∂x_{ik}` with zero-based coordinate indices.
///
/// An empty multi-index returns `f_θ(x)`.
pub fn input_derivative(
    theta: &ParamVector,
    arch: &MlpArchitecture,
    x: &[f64],
    multi_index: &[usize],
) -> Result<f64> {
    check_multi_index(multi_index, arch.input_dim)?;
    if x.len() != arch.input_dim {
        return Err(Error::InputShape {
            expected: arch.input_dim,
            got: x.len(),
        });
    }
    if !theta.matches(arch) {
        return Err(Error::InputShape {
            expected: arch.num_params(),
            got: theta.len(),
        });
    }
    let params = theta.as_slice();
    match *multi_index {
        [] => Ok(forward_unchecked(params, arch, x)),
        [i] | [i, _] if multi_index.len() == 1 || multi_index[0] == multi_index[1] => {
            let p: Vec<Jet2<f64>> = params.iter().map(|&v| Jet2::constant(v)).collect();
            let xs: Vec<Jet2<f64>> = x
                .iter()
                .enumerate()
                .map(|(c, &v)| if c == i { Jet2::variable(v) } else { Jet2::constant(v) })
                .collect();
            let out = forward_generic(&p, arch, &xs)?;
            Ok(if multi_index.len() == 1 { out.d1 } else { out.d2 })
        }
        [i, j] => {
            let p: Vec<BiJet<f64>> = params.iter().map(|&v| BiJet::constant(v)).collect();
            let xs: Vec<BiJet<f64>> = x
                .iter()
                .enumerate()
                .map(|(c, &v)| {
                    BiJet::new(v, if c == i { 1.0 } else { 0.0 }, if c == j { 1.0 } else { 0.0 }, 0.0)
                })
                .collect();
            Ok(forward_generic(&p, arch, &xs)?.dab)
        }
        _ => Err(Error::UnsupportedOrder(multi_index.len())),
    }
}

/// One HOVR integrand evaluation and its parameter gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct HovrTerm {
    /// The input derivative `d`.
    pub derivative: f64,
    /// `|d|^q`.
    pub value: f64,
    pub grad: Vec<f64>,
    /// `d = 0` with `q < 1`: the zero vector was returned as a Clarke subgradient.
    pub kink: bool,
}

/// Outer factor `∂|d|^q/∂d`, with the kink convention at `d = 0`.
pub(crate) fn power_slope(d: f64, q: f64) -> (f64, bool) {
    if d == 0.0 {
        return (0.0, q < 1.0);
    }
    (q * d.abs().powf(q - 1.0) * d.signum(), false)
}

/// `|∇^[k]_i f_θ(z)|^q` and its gradient in `θ`.
pub fn hovr_term_grad(
    theta: &ParamVector,
    arch: &MlpArchitecture,
    z: &[f64],
    multi_index: &[usize],
    q: f64,
) -> Result<HovrTerm> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::input("q must be positive"));
    }
    check_multi_index(multi_index, arch.input_dim)?;
    if !theta.matches(arch) {
        return Err(Error::InputShape {
            expected: arch.num_params(),
            got: theta.len(),
        });
    }
    let mut plan = StreamPlan::value_only();
    let stream = plan.request(multi_index, arch.input_dim)?;
    let point = Array2::from_shape_vec((1, z.len()), z.to_vec())
        .map_err(|_| Error::input("bad point"))?;
    let pass = batch::forward(theta.as_slice(), arch, point.view(), &plan)?;
    let d = pass.output(stream)[0];
    let (slope, kink) = power_slope(d, q);
    let mut grad = vec![0.0; theta.len()];
    if slope != 0.0 {
        let mut cot = pass.cotangent();
        pass.cotangent_stream(&mut cot, stream)[0] = slope;
        pass.backward(theta.as_slice(), arch, &cot, &mut grad);
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NumericalOverflow { node: i });
    }
    Ok(HovrTerm {
        derivative: d,
        value: d.abs().powf(q),
        grad,
        kink,
    })
}

/// Reference route for [`hovr_term_grad`]: jets over tape variables.
pub fn hovr_term_grad_tape(
    theta: &ParamVector,
    arch: &MlpArchitecture,
    z: &[f64],
    multi_index: &[usize],
    q: f64,
) -> Result<HovrTerm> {
    check_multi_index(multi_index, arch.input_dim)?;
    let tape = Tape::new();
    let vars = tape.vars(theta.as_slice());
    let d = match *multi_index {
        [] => {
            let xs: Vec<Var> = z.iter().map(|&v| tape.constant(v)).collect();
            forward_generic(&vars, arch, &xs)?
        }
        [i] | [i, _] if multi_index.len() == 1 || multi_index[0] == multi_index[1] => {
            let p: Vec<Jet2<Var>> = vars.iter().map(|&v| Jet2::constant(v)).collect();
            let xs: Vec<Jet2<Var>> = z
                .iter()
                .enumerate()
                .map(|(c, &v)| {
                    let x = tape.constant(v);
                    if c == i {
                        Jet2::variable(x)
                    } else {
                        Jet2::constant(x)
                    }
                })
                .collect();
            let out = forward_generic(&p, arch, &xs)?;
            if multi_index.len() == 1 {
                out.d1
            } else {
                out.d2
            }
        }
        [i, j] => {
            let p: Vec<BiJet<Var>> = vars.iter().map(|&v| BiJet::constant(v)).collect();
            let xs: Vec<BiJet<Var>> = z
                .iter()
                .enumerate()
                .map(|(c, &v)| {
                    BiJet::new(
                        tape.constant(v),
                        tape.constant(if c == i { 1.0 } else { 0.0 }),
                        tape.constant(if c == j { 1.0 } else { 0.0 }),
                        tape.constant(0.0),
                    )
                })
                .collect();
            forward_generic(&p, arch, &xs)?.dab
        }
        _ => return Err(Error::UnsupportedOrder(multi_index.len())),
    };
    let dv = d.value();
    let (slope, kink) = power_slope(dv, q);
    let grad = if slope != 0.0 {
        tape.gradient(d, &vars)?.into_iter().map(|g| g * slope).collect()
    } else {
        vec![0.0; theta.len()]
    };
    Ok(HovrTerm {
        derivative: dv,
        value: dv.abs().powf(q),
        grad,
        kink,
    })
}
