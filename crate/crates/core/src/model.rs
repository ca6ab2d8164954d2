//! Multilayer perceptron `f_θ: Ω → R` with a flat parameter vector.
//!
//! Layer `q` maps `R^{L_q} → R^{L_{q+1}}` with `A^(q) x + b^(q)`; every layer
//! except the last is followed by the activation. The output width is fixed
//! to one. Parameters are stored layer by layer: the weight matrix in
//! row-major order followed by the bias.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diff::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Sigmoid,
    Tanh,
}

impl Activation {
    /// `σ, σ', σ'', σ'''` at `z`.
    #[inline]
    pub fn derivatives(self, z: f64) -> [f64; 4] {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(z);
                let s1 = s * (1.0 - s);
                [s, s1, s1 * (1.0 - 2.0 * s), s1 * (1.0 - 6.0 * s + 6.0 * s * s)]
            }
            Activation::Tanh => {
                let t = z.tanh();
                let t1 = 1.0 - t * t;
                [t, t1, -2.0 * t * t1, t1 * (6.0 * t * t - 2.0)]
            }
        }
    }

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
        }
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::config(format!(
                "unknown activation `{other}` (expected sigmoid or tanh)"
            ))),
        }
    }
}

/// Shape of an MLP with scalar output.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, activation: Activation) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::config("input dimension must be at least 1"));
        }
        if hidden.contains(&0) {
            return Err(Error::config("hidden widths must be at least 1"));
        }
        Ok(Self {
            input_dim,
            hidden,
            activation,
        })
    }

    /// Three hidden sigmoid layers of width 100.
    pub fn paper_default(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![100, 100, 100],
            activation: Activation::Sigmoid,
        }
    }

    /// `Q = 0`: `f(x) = w·x + b`.
    pub fn linear(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: Vec::new(),
            activation: Activation::Sigmoid,
        }
    }

    /// `(L_0, L_1, ..., L_Q, 1)`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(1);
        w
    }

    /// `(rows, cols)` of each weight matrix; the bias of layer `q` has `rows` entries.
    pub fn layout(&self) -> Vec<(usize, usize)> {
        self.widths().windows(2).map(|p| (p[1], p[0])).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layout().iter().map(|&(r, c)| r * c + r).sum()
    }

    pub(crate) fn layer_offsets(&self) -> Vec<LayerSlice> {
        let mut offset = 0;
        self.layout()
            .into_iter()
            .map(|(rows, cols)| {
                let s = LayerSlice {
                    rows,
                    cols,
                    weight: offset,
                    bias: offset + rows * cols,
                };
                offset += rows * cols + rows;
                s
            })
            .collect()
    }

    /// Compact description, e.g. `2-100-100-100-1/sigmoid`.
    pub fn describe(&self) -> String {
        let w: Vec<String> = self.widths().iter().map(|w| w.to_string()).collect();
        format!("{}/{}", w.join("-"), self.activation)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerSlice {
    pub rows: usize,
    pub cols: usize,
    pub weight: usize,
    pub bias: usize,
}

/// Axis-aligned box `Π_j [lower_j, upper_j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::input("domain bounds must be nonempty and of equal length"));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u))
        {
            return Err(Error::input("domain requires finite lower_j < upper_j"));
        }
        Ok(Self { lower, upper })
    }

    pub fn cube(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    /// Draws a point uniformly from the box into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for ((o, l), u) in out.iter_mut().zip(&self.lower).zip(&self.upper) {
            *o = l + (u - l) * rng.random::<f64>();
        }
    }
}

/// Flat parameter vector `θ` together with its layer shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Vec<(usize, usize)>,
}

impl ParamVector {
    pub fn from_values(arch: &MlpArchitecture, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.num_params() {
            return Err(Error::InputShape {
                expected: arch.num_params(),
                got: values.len(),
            });
        }
        Ok(Self {
            values,
            layout: arch.layout(),
        })
    }

    pub fn zeros(arch: &MlpArchitecture) -> Self {
        Self {
            values: vec![0.0; arch.num_params()],
            layout: arch.layout(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &[(usize, usize)] {
        &self.layout
    }

    pub fn matches(&self, arch: &MlpArchitecture) -> bool {
        self.layout == arch.layout()
    }

    /// Splits into per-layer `(weights row-major, bias)`.
    pub fn unflatten(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut offset = 0;
        self.layout
            .iter()
            .map(|&(r, c)| {
                let w = self.values[offset..offset + r * c].to_vec();
                let b = self.values[offset + r * c..offset + r * c + r].to_vec();
                offset += r * c + r;
                (w, b)
            })
            .collect()
    }

    pub fn flatten(arch: &MlpArchitecture, layers: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let layout = arch.layout();
        if layers.len() != layout.len() {
            return Err(Error::input("layer count does not match architecture"));
        }
        let mut values = Vec::with_capacity(arch.num_params());
        for ((w, b), &(r, c)) in layers.iter().zip(&layout) {
            if w.len() != r * c || b.len() != r {
                return Err(Error::input("layer shape does not match architecture"));
            }
            values.extend_from_slice(w);
            values.extend_from_slice(b);
        }
        Ok(Self { values, layout })
    }

    fn layout_string(&self) -> String {
        self.layout
            .iter()
            .map(|(r, c)| format!("{r}x{c}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    /// One value per line after a `# layout=...` header. Values use the
    /// shortest round-trip representation so a reload is exact. Later `#`
    /// lines are comments.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# layout={}", self.layout_string())?;
        for v in &self.values {
            writeln!(out, "{v:?}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::input("parameter file is empty"))??;
        let layout = parse_layout_header(&header)?;
        let expected: usize = layout
            .iter()
            .try_fold(0usize, |acc, &(r, c)| {
                r.checked_mul(c)
                    .and_then(|rc| rc.checked_add(r))
                    .and_then(|n| acc.checked_add(n))
            })
            .ok_or_else(|| Error::input("layout overflows"))?;
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            if values.len() == expected {
                return Err(Error::input("more values than the layout declares"));
            }
            let v: f64 = t
                .parse()
                .map_err(|_| Error::input(format!("line {}: `{t}` is not a number", i + 2)))?;
            values.push(v);
        }
        if values.len() != expected {
            return Err(Error::InputShape {
                expected,
                got: values.len(),
            });
        }
        Ok(Self { values, layout })
    }
}

fn parse_layout_header(header: &str) -> Result<Vec<(usize, usize)>> {
    let body = header
        .trim()
        .strip_prefix("# layout=")
        .ok_or_else(|| Error::input("missing `# layout=` header"))?;
    let mut layout = Vec::new();
    for part in body.split(';') {
        let (r, c) = part
            .split_once('x')
            .ok_or_else(|| Error::input(format!("bad layer shape `{part}`")))?;
        let r: usize = r
            .trim()
            .parse()
            .map_err(|_| Error::input(format!("bad layer rows `{r}`")))?;
        let c: usize = c
            .trim()
            .parse()
            .map_err(|_| Error::input(format!("bad layer cols `{c}`")))?;
        if r == 0 || c == 0 {
            return Err(Error::input("layer shapes must be positive"));
        }
        layout.push((r, c));
    }
    for w in layout.windows(2) {
        if w[1].1 != w[0].0 {
            return Err(Error::input("consecutive layer shapes do not chain"));
        }
    }
    if layout.last().map(|l| l.0) != Some(1) {
        return Err(Error::input("final layer must have one output"));
    }
    Ok(layout)
}

/// Glorot-uniform weights, zero biases.
pub fn init(arch: &MlpArchitecture, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; arch.num_params()];
    for layer in arch.layer_offsets() {
        let limit = (6.0 / (layer.rows + layer.cols) as f64).sqrt();
        for w in &mut values[layer.weight..layer.bias] {
            *w = rng.random_range(-limit..=limit);
        }
    }
    ParamVector {
        values,
        layout: arch.layout(),
    }
}

/// Plain `f64` evaluation of `f_θ(x)`.
pub fn forward(theta: &ParamVector, arch: &MlpArchitecture, x: &[f64]) -> Result<f64> {
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
    Ok(forward_unchecked(theta.as_slice(), arch, x))
}

pub(crate) fn forward_unchecked(theta: &[f64], arch: &MlpArchitecture, x: &[f64]) -> f64 {
    let layers = arch.layer_offsets();
    let last = layers.len() - 1;
    let mut h = x.to_vec();
    let mut next = Vec::new();
    for (q, layer) in layers.iter().enumerate() {
        next.clear();
        for row in 0..layer.rows {
            let w = &theta[layer.weight + row * layer.cols..layer.weight + (row + 1) * layer.cols];
            let z = theta[layer.bias + row] + w.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
            next.push(if q == last { z } else { arch.activation.apply(z) });
        }
        std::mem::swap(&mut h, &mut next);
    }
    h[0]
}

/// Evaluates the network over any [`Scalar`]: jets for input derivatives,
/// tape variables for parameter gradients, or both nested.
pub fn forward_generic<S: Scalar>(params: &[S], arch: &MlpArchitecture, x: &[S]) -> Result<S> {
    if x.len() != arch.input_dim {
        return Err(Error::InputShape {
            expected: arch.input_dim,
            got: x.len(),
        });
    }
    if params.len() != arch.num_params() {
        return Err(Error::InputShape {
            expected: arch.num_params(),
            got: params.len(),
        });
    }
    let layers = arch.layer_offsets();
    let last = layers.len() - 1;
    let mut h: Vec<S> = x.to_vec();
    for (q, layer) in layers.iter().enumerate() {
        let mut next = Vec::with_capacity(layer.rows);
        for row in 0..layer.rows {
            let mut z = params[layer.bias + row];
            for col in 0..layer.cols {
                z = z + params[layer.weight + row * layer.cols + col] * h[col];
            }
            next.push(if q == last {
                z
            } else {
                match arch.activation {
                    Activation::Sigmoid => z.sigmoid(),
                    Activation::Tanh => z.tanh(),
                }
            });
        }
        h = next;
    }
    Ok(h[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_architecture_has_20601_params() {
        let arch = MlpArchitecture::paper_default(2);
        assert_eq!(arch.num_params(), 20601);
        assert_eq!(init(&arch, 0).len(), 20601);
    }

    #[test]
    fn zero_depth_is_linear() {
        let arch = MlpArchitecture::linear(3);
        assert_eq!(arch.num_params(), 4);
        let arch2 = MlpArchitecture::linear(2);
        let theta = ParamVector::from_values(&arch2, vec![1.0, -1.0, 0.0]).unwrap();
        assert_eq!(forward(&theta, &arch2, &[2.0, 3.0]).unwrap(), -1.0);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let arch = MlpArchitecture::new(2, vec![7, 5], Activation::Tanh).unwrap();
        let a = init(&arch, 11);
        assert_eq!(a, init(&arch, 11));
        assert_ne!(a, init(&arch, 12));
        for (layer, (w, b)) in arch.layer_offsets().iter().zip(a.unflatten()) {
            let limit = (6.0 / (layer.rows + layer.cols) as f64).sqrt();
            assert!(w.iter().all(|v| v.abs() <= limit));
            assert!(b.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let arch = MlpArchitecture::new(2, vec![1], Activation::Sigmoid).unwrap();
        let theta = ParamVector::zeros(&arch);
        assert_eq!(forward(&theta, &arch, &[0.3, -1.0]).unwrap(), 0.0);
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let arch = MlpArchitecture::linear(2);
        let theta = ParamVector::zeros(&arch);
        assert!(matches!(
            forward(&theta, &arch, &[1.0]),
            Err(Error::InputShape { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn flatten_roundtrip() {
        let arch = MlpArchitecture::new(3, vec![4, 2], Activation::Sigmoid).unwrap();
        let theta = init(&arch, 5);
        let back = ParamVector::flatten(&arch, &theta.unflatten()).unwrap();
        assert_eq!(theta, back);
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let arch = MlpArchitecture::new(2, vec![3], Activation::Tanh).unwrap();
        let theta = init(&arch, 1);
        let mut buf = Vec::new();
        theta.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# layout=3x2;1x3\n"));
        let back = ParamVector::read_csv(&buf[..]).unwrap();
        assert_eq!(theta, back);
    }

    #[test]
    fn csv_rejects_broken_layouts() {
        for bad in [
            "",
            "layout=1x2\n0\n0\n0\n",
            "# layout=3x2;2x3\n",
            "# layout=3x2;1x4\n",
            "# layout=0x2\n",
            "# layout=1x2\n1\n2\n",
            "# layout=1x2\n1\n2\n3\n4\n",
            "# layout=1x2\n1\nabc\n3\n",
        ] {
            assert!(ParamVector::read_csv(bad.as_bytes()).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn activation_derivatives_match_finite_differences() {
        for act in [Activation::Sigmoid, Activation::Tanh] {
            for &z in &[-3.0, -0.4, 0.0, 0.7, 2.5] {
                let d = act.derivatives(z);
                let h = 1e-5;
                let p = act.derivatives(z + h);
                let m = act.derivatives(z - h);
                for k in 0..3 {
                    let fd = (p[k] - m[k]) / (2.0 * h);
                    assert!((fd - d[k + 1]).abs() < 1e-8, "{act} z={z} k={k}");
                }
            }
        }
    }

    #[test]
    fn domain_box_validates() {
        assert!(DomainBox::new(vec![0.0], vec![0.0]).is_err());
        assert!(DomainBox::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let b = DomainBox::cube(2, 0.0, 2.0).unwrap();
        assert_eq!(b.volume(), 4.0);
        assert!(b.contains(&[0.0, 2.0]));
        assert!(!b.contains(&[0.0, 2.1]));
    }
}
