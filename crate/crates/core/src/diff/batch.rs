//! Batched jet propagation with a layer-level reverse sweep.
//!
//! A batch of `P` points is pushed through the network as a stack of
//! column blocks: block 0 carries the values, then one block per requested
//! first-order direction `e_i`, then one block per second-order pair
//! `(i, j)`. Each layer records its input and pre-activation so that any
//! cotangent on the output blocks can be pulled back to `θ` in one sweep.
//! This is the same computation as the scalar tape over [`super::Jet2`]
//! and [`super::BiJet`], organized as matrix products.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis, Zip};

use crate::error::{Error, Result};
use crate::model::{Activation, MlpArchitecture};

/// Derivative streams propagated alongside the value.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StreamPlan {
    first: Vec<usize>,
    /// Pairs of positions into `first`.
    second: Vec<(usize, usize)>,
}

/// Location of one output quantity in a [`StreamPlan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Value,
    First(usize),
    Second(usize),
}

impl StreamPlan {
    pub fn value_only() -> Self {
        Self::default()
    }

    fn first_slot(&mut self, dir: usize) -> usize {
        match self.first.iter().position(|&d| d == dir) {
            Some(p) => p,
            None => {
                self.first.push(dir);
                self.first.len() - 1
            }
        }
    }

    /// Adds the stream holding `∂^k f / ∂x_{i1}..∂x_{ik}` (k ≤ 2) and returns its location.
    pub fn request(&mut self, multi_index: &[usize], input_dim: usize) -> Result<Stream> {
        if let Some(&bad) = multi_index.iter().find(|&&i| i >= input_dim) {
            return Err(Error::input(format!(
                "coordinate index {} out of range 1..={input_dim}",
                bad + 1
            )));
        }
        match *multi_index {
            [] => Ok(Stream::Value),
            [i] => Ok(Stream::First(self.first_slot(i))),
            [i, j] => {
                let (a, b) = (self.first_slot(i.min(j)), self.first_slot(i.max(j)));
                let pos = match self.second.iter().position(|&p| p == (a, b)) {
                    Some(p) => p,
                    None => {
                        self.second.push((a, b));
                        self.second.len() - 1
                    }
                };
                Ok(Stream::Second(pos))
            }
            _ => Err(Error::UnsupportedOrder(multi_index.len())),
        }
    }

    pub fn num_streams(&self) -> usize {
        1 + self.first.len() + self.second.len()
    }

    fn block(&self, stream: Stream) -> usize {
        match stream {
            Stream::Value => 0,
            Stream::First(f) => 1 + f,
            Stream::Second(s) => 1 + self.first.len() + s,
        }
    }
}

struct LayerCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    /// `σ', σ'', σ'''` at the value block of `pre` (hidden layers only).
    dsig: Option<[Array2<f64>; 3]>,
}

/// Result of a batched forward pass.
pub struct JetPass<'p> {
    plan: &'p StreamPlan,
    points: usize,
    layers: Vec<LayerCache>,
    output: Array2<f64>,
}

fn weight_view<'a>(theta: &'a [f64], offset: usize, rows: usize, cols: usize) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((rows, cols), &theta[offset..offset + rows * cols])
        .expect("layer slice matches its shape")
}

/// Pushes `points` (`P × J`, one row per point) through the network.
pub fn forward<'p>(
    theta: &[f64],
    arch: &MlpArchitecture,
    points: ArrayView2<'_, f64>,
    plan: &'p StreamPlan,
) -> Result<JetPass<'p>> {
    let j = arch.input_dim;
    if points.ncols() != j {
        return Err(Error::InputShape {
            expected: j,
            got: points.ncols(),
        });
    }
    if theta.len() != arch.num_params() {
        return Err(Error::InputShape {
            expected: arch.num_params(),
            got: theta.len(),
        });
    }
    let p = points.nrows();
    let streams = plan.num_streams();
    let mut h = Array2::<f64>::zeros((j, streams * p));
    h.slice_mut(s![.., 0..p]).assign(&points.t());
    for (f, &dir) in plan.first.iter().enumerate() {
        let b = 1 + f;
        h.slice_mut(s![dir, b * p..(b + 1) * p]).fill(1.0);
    }

    let offsets = arch.layer_offsets();
    let last = offsets.len() - 1;
    let mut layers = Vec::with_capacity(offsets.len());
    for (q, layer) in offsets.iter().enumerate() {
        let w = weight_view(theta, layer.weight, layer.rows, layer.cols);
        let bias = ArrayView1::from(&theta[layer.bias..layer.bias + layer.rows]);
        let mut pre = w.dot(&h);
        pre.slice_mut(s![.., 0..p])
            .zip_mut_with(&bias.insert_axis(Axis(1)).broadcast((layer.rows, p)).unwrap(), |z, b| {
                *z += b
            });
        if q == last {
            layers.push(LayerCache {
                input: h,
                pre: Array2::zeros((0, 0)),
                dsig: None,
            });
            return Ok(JetPass {
                plan,
                points: p,
                layers,
                output: pre,
            });
        }
        let (next, dsig) = activate(arch.activation, &pre, plan, p);
        layers.push(LayerCache {
            input: h,
            pre,
            dsig: Some(dsig),
        });
        h = next;
    }
    unreachable!("architectures always have an output layer")
}

fn activate(
    act: Activation,
    pre: &Array2<f64>,
    plan: &StreamPlan,
    p: usize,
) -> (Array2<f64>, [Array2<f64>; 3]) {
    let rows = pre.nrows();
    let mut out = Array2::<f64>::zeros(pre.raw_dim());
    let mut s1 = Array2::<f64>::zeros((rows, p));
    let mut s2 = Array2::<f64>::zeros((rows, p));
    let mut s3 = Array2::<f64>::zeros((rows, p));
    Zip::from(out.slice_mut(s![.., 0..p]))
        .and(&mut s1)
        .and(&mut s2)
        .and(&mut s3)
        .and(pre.slice(s![.., 0..p]))
        .for_each(|o, d1, d2, d3, &z| {
            let d = act.derivatives(z);
            *o = d[0];
            *d1 = d[1];
            *d2 = d[2];
            *d3 = d[3];
        });
    let blk = |b: usize| s![.., b * p..(b + 1) * p];
    for f in 0..plan.first.len() {
        let b = 1 + f;
        Zip::from(out.slice_mut(blk(b)))
            .and(&s1)
            .and(pre.slice(blk(b)))
            .for_each(|o, &d1, &z| *o = d1 * z);
    }
    for (sidx, &(a, c)) in plan.second.iter().enumerate() {
        let b = 1 + plan.first.len() + sidx;
        Zip::from(out.slice_mut(blk(b)))
            .and(&s1)
            .and(&s2)
            .and(pre.slice(blk(1 + a)))
            .and(pre.slice(blk(1 + c)))
            .and(pre.slice(blk(b)))
            .for_each(|o, &d1, &d2, &za, &zc, &zab| *o = d2 * za * zc + d1 * zab);
    }
    (out, [s1, s2, s3])
}

impl<'p> JetPass<'p> {
    pub fn num_points(&self) -> usize {
        self.points
    }

    /// Per-point values of one output stream.
    pub fn output(&self, stream: Stream) -> ArrayView1<'_, f64> {
        let b = self.plan.block(stream);
        self.output.slice(s![0, b * self.points..(b + 1) * self.points])
    }

    /// A zeroed cotangent buffer shaped like the output.
    pub fn cotangent(&self) -> Array2<f64> {
        Array2::zeros(self.output.raw_dim())
    }

    /// Mutable view of one stream's slots in a cotangent buffer.
    pub fn cotangent_stream<'a>(&self, cot: &'a mut Array2<f64>, stream: Stream) -> ndarray::ArrayViewMut1<'a, f64> {
        let b = self.plan.block(stream);
        cot.slice_mut(s![0, b * self.points..(b + 1) * self.points])
    }

    /// Adds `Σ cot · ∂output/∂θ` into `grad`.
    pub fn backward(&self, theta: &[f64], arch: &MlpArchitecture, cot: &Array2<f64>, grad: &mut [f64]) {
        assert_eq!(cot.raw_dim(), self.output.raw_dim(), "cotangent shape");
        assert_eq!(grad.len(), theta.len(), "gradient length");
        let offsets = arch.layer_offsets();
        let p = self.points;
        let mut zbar = cot.clone();
        for (q, layer) in offsets.iter().enumerate().rev() {
            let cache = &self.layers[q];
            if let Some(dsig) = &cache.dsig {
                zbar = pull_activation(&zbar, &cache.pre, dsig, self.plan, p);
            }
            {
                let gw = &mut grad[layer.weight..layer.weight + layer.rows * layer.cols];
                let mut gw = ArrayViewMut2::from_shape((layer.rows, layer.cols), gw).unwrap();
                ndarray::linalg::general_mat_mul(1.0, &zbar, &cache.input.t(), 1.0, &mut gw);
            }
            let gb = &mut grad[layer.bias..layer.bias + layer.rows];
            for (g, row) in gb.iter_mut().zip(zbar.slice(s![.., 0..p]).rows()) {
                *g += row.sum();
            }
            if q > 0 {
                let w = weight_view(theta, layer.weight, layer.rows, layer.cols);
                zbar = w.t().dot(&zbar);
            }
        }
    }
}

/// Pulls the output cotangent of an activation layer back to its pre-activation.
fn pull_activation(
    hbar: &Array2<f64>,
    pre: &Array2<f64>,
    dsig: &[Array2<f64>; 3],
    plan: &StreamPlan,
    p: usize,
) -> Array2<f64> {
    let [s1, s2, s3] = dsig;
    let blk = |b: usize| s![.., b * p..(b + 1) * p];
    let nfirst = plan.first.len();
    let mut zbar = Array2::<f64>::zeros(hbar.raw_dim());
    Zip::from(zbar.slice_mut(blk(0)))
        .and(hbar.slice(blk(0)))
        .and(s1)
        .for_each(|z, &h, &d1| *z = h * d1);
    for f in 0..nfirst {
        let b = 1 + f;
        Zip::from(zbar.slice_mut(blk(b)))
            .and(hbar.slice(blk(b)))
            .and(s1)
            .for_each(|z, &h, &d1| *z = h * d1);
        Zip::from(zbar.slice_mut(blk(0)))
            .and(hbar.slice(blk(b)))
            .and(s2)
            .and(pre.slice(blk(b)))
            .for_each(|z, &h, &d2, &zf| *z += h * d2 * zf);
    }
    for (sidx, &(a, c)) in plan.second.iter().enumerate() {
        let b = 1 + nfirst + sidx;
        let (ba, bc) = (1 + a, 1 + c);
        Zip::from(zbar.slice_mut(blk(b)))
            .and(hbar.slice(blk(b)))
            .and(s1)
            .for_each(|z, &h, &d1| *z = h * d1);
        Zip::from(zbar.slice_mut(blk(0)))
            .and(hbar.slice(blk(b)))
            .and(s3)
            .and(pre.slice(blk(ba)))
            .and(pre.slice(blk(bc)))
            .for_each(|z, &h, &d3, &za, &zc| *z += h * d3 * za * zc);
        Zip::from(zbar.slice_mut(blk(0)))
            .and(hbar.slice(blk(b)))
            .and(s2)
            .and(pre.slice(blk(b)))
            .for_each(|z, &h, &d2, &zab| *z += h * d2 * zab);
        Zip::from(zbar.slice_mut(blk(ba)))
            .and(hbar.slice(blk(b)))
            .and(s2)
            .and(pre.slice(blk(bc)))
            .for_each(|z, &h, &d2, &zc| *z += h * d2 * zc);
        Zip::from(zbar.slice_mut(blk(bc)))
            .and(hbar.slice(blk(b)))
            .and(s2)
            .and(pre.slice(blk(ba)))
            .for_each(|z, &h, &d2, &za| *z += h * d2 * za);
    }
    zbar
}

/// Values `f_θ(x)` for each row of `points`, evaluated in chunks.
pub fn predict(theta: &[f64], arch: &MlpArchitecture, points: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    let plan = StreamPlan::value_only();
    let mut out = Array1::zeros(points.nrows());
    const CHUNK: usize = 4096;
    let mut start = 0;
    while start < points.nrows() {
        let end = (start + CHUNK).min(points.nrows());
        let pass = forward(theta, arch, points.slice(s![start..end, ..]), &plan)?;
        out.slice_mut(s![start..end]).assign(&pass.output(Stream::Value));
        start = end;
    }
    Ok(out)
}
