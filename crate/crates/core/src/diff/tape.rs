//! Scalar reverse-mode tape.
//!
//! Every arithmetic operation on a [`Var`] appends one node holding the
//! local partial derivatives with respect to its (at most two) parents. The
//! reverse sweep walks the nodes in strictly decreasing index order.

use std::cell::RefCell;
use std::ops::{Add, Mul, Neg, Sub};

use super::Scalar;
use crate::error::{Error, Result};
use crate::model::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Input,
    Constant,
    Add,
    Sub,
    Mul,
    Neg,
    Sigmoid,
    Tanh,
}

#[derive(Debug, Clone, Copy)]
pub struct TapeNode {
    pub kind: OpKind,
    pub parents: [usize; 2],
    pub partials: [f64; 2],
    pub value: f64,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<TapeNode>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, kind: OpKind, parents: [usize; 2], partials: [f64; 2], value: f64) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len();
        nodes.push(TapeNode {
            kind,
            parents,
            partials,
            value,
        });
        Var {
            tape: self,
            index,
            value,
        }
    }

    /// A differentiable input.
    pub fn var(&self, value: f64) -> Var<'_> {
        self.push(OpKind::Input, [0, 0], [0.0, 0.0], value)
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        self.push(OpKind::Constant, [0, 0], [0.0, 0.0], value)
    }

    /// Adjoints `∂output/∂node` for every node up to `output`.
    pub fn adjoints(&self, output: Var<'_>) -> Result<Vec<f64>> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0f64; output.index + 1];
        adj[output.index] = 1.0;
        for i in (0..=output.index).rev() {
            let node = &nodes[i];
            if !node.value.is_finite() {
                return Err(Error::NumericalOverflow { node: i });
            }
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            if !a.is_finite() {
                return Err(Error::NumericalOverflow { node: i });
            }
            match node.kind {
                OpKind::Input | OpKind::Constant => {}
                OpKind::Neg | OpKind::Sigmoid | OpKind::Tanh => {
                    adj[node.parents[0]] += a * node.partials[0];
                }
                OpKind::Add | OpKind::Sub | OpKind::Mul => {
                    adj[node.parents[0]] += a * node.partials[0];
                    adj[node.parents[1]] += a * node.partials[1];
                }
            }
        }
        Ok(adj)
    }

    /// `∂output/∂input` for each of `inputs`.
    pub fn gradient(&self, output: Var<'_>, inputs: &[Var<'_>]) -> Result<Vec<f64>> {
        let adj = self.adjoints(output)?;
        Ok(inputs
            .iter()
            .map(|v| adj.get(v.index).copied().unwrap_or(0.0))
            .collect())
    }
}

/// A value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: usize,
    value: f64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({})", self.index, self.value)
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn index(&self) -> usize {
        self.index
    }

    fn unary(self, kind: OpKind, partial: f64, value: f64) -> Self {
        self.tape.push(kind, [self.index, 0], [partial, 0.0], value)
    }

    fn binary(self, rhs: Self, kind: OpKind, partials: [f64; 2], value: f64) -> Self {
        debug_assert!(std::ptr::eq(self.tape, rhs.tape), "mixing tapes");
        self.tape.push(kind, [self.index, rhs.index], partials, value)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, OpKind::Add, [1.0, 1.0], self.value + rhs.value)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, OpKind::Sub, [1.0, -1.0], self.value - rhs.value)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, OpKind::Mul, [rhs.value, self.value], self.value * rhs.value)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.unary(OpKind::Neg, -1.0, -self.value)
    }
}

impl Scalar for Var<'_> {
    fn lift(&self, c: f64) -> Self {
        self.tape.constant(c)
    }

    fn primal(&self) -> f64 {
        self.value
    }

    fn sigmoid(self) -> Self {
        let s = sigmoid(self.value);
        self.unary(OpKind::Sigmoid, s * (1.0 - s), s)
    }

    fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.unary(OpKind::Tanh, 1.0 - t * t, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = tape.var(-2.0);
        let z = x * y + x * x;
        let g = tape.gradient(z, &[x, y]).unwrap();
        assert_eq!(g, vec![-2.0 + 6.0, 3.0]);
    }

    #[test]
    fn nodes_are_append_only_and_sweep_is_reverse() {
        let tape = Tape::new();
        let x = tape.var(0.5);
        let y = x.sigmoid();
        let z = y * x;
        assert!(x.index() < y.index() && y.index() < z.index());
        assert_eq!(tape.len(), 3);
        let s = sigmoid(0.5);
        let g = tape.gradient(z, &[x]).unwrap();
        assert!((g[0] - (s + 0.5 * s * (1.0 - s))).abs() < 1e-15);
    }

    #[test]
    fn overflow_is_reported_with_node_index() {
        let tape = Tape::new();
        let x = tape.var(1e200);
        let y = x * x;
        let z = y.sigmoid();
        match tape.gradient(z, &[x]) {
            Err(Error::NumericalOverflow { node }) => assert_eq!(node, y.index()),
            other => panic!("expected overflow, got {other:?}"),
        }
    }
}
