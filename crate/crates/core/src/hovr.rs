//! Higher-order variation `C_{k,q}(f) = Σ_i w_i ∫_Ω |∇^[k]_i f(x)|^q dx`.
//!
//! The Monte-Carlo estimator draws uniform points from the domain box and
//! multiplies the sample mean by `vol(Ω)`, so it is unbiased for the
//! integral itself (and for its gradient). [`quad_hovr`] is a midpoint-rule
//! reference and [`basis_model_hov`] the closed form for linear basis
//! models with `q = 2`.

use std::fmt;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diff::batch::{self, Stream, StreamPlan};
use crate::diff::power_slope;
use crate::error::{Error, Result};
use crate::model::{DomainBox, MlpArchitecture, ParamVector};

/// Zero-based coordinate indices `(i_1, ..., i_k)`; displayed one-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn order(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

pub const DEFAULT_MC_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct HovrSpec {
    pub k: usize,
    pub q: f64,
    pub lambda: f64,
    pub weights: Vec<(MultiIndex, f64)>,
    pub domain: DomainBox,
    pub mc_samples: usize,
}

impl HovrSpec {
    pub fn new(
        k: usize,
        q: f64,
        lambda: f64,
        weights: Vec<(MultiIndex, f64)>,
        domain: DomainBox,
        mc_samples: usize,
    ) -> Result<Self> {
        let spec = Self {
            k,
            q,
            lambda,
            weights,
            domain,
            mc_samples,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `w_i = 1/J` on the diagonal multi-indices `(j, ..., j)`.
    pub fn diagonal(k: usize, q: f64, lambda: f64, domain: DomainBox, mc_samples: usize) -> Result<Self> {
        let j = domain.dim();
        let weights = (0..j)
            .map(|c| (MultiIndex(vec![c; k]), 1.0 / j as f64))
            .collect();
        Self::new(k, q, lambda, weights, domain, mc_samples)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.k) {
            return Err(Error::UnsupportedOrder(self.k));
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::config(format!("q = {} must be positive", self.q)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!("lambda = {} must be nonnegative", self.lambda)));
        }
        if self.mc_samples == 0 {
            return Err(Error::config("Monte-Carlo sample count must be positive"));
        }
        if self.weights.is_empty() {
            return Err(Error::config("HOVR needs at least one weighted multi-index"));
        }
        let j = self.domain.dim();
        let mut total = 0.0;
        for (mi, w) in &self.weights {
            if mi.order() != self.k {
                return Err(Error::config(format!("multi-index {mi} does not have order k = {}", self.k)));
            }
            if mi.0.iter().any(|&i| i >= j) {
                return Err(Error::config(format!("multi-index {mi} exceeds input dimension {j}")));
            }
            if !(*w >= 0.0) {
                return Err(Error::config(format!("weight of {mi} is negative")));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!("HOVR weights sum to {total}, not 1")));
        }
        Ok(())
    }

    /// Same spec with a different `λ`.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }
}

/// Seeded stream for iteration `t`: the sampler is a pure function of `(seed, t)`.
pub fn mc_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct HovrEstimate {
    pub estimate: f64,
    pub grad: Vec<f64>,
    /// Samples where `d = 0` with `q < 1`.
    pub kinks: usize,
}

struct Streams {
    plan: StreamPlan,
    terms: Vec<(Stream, f64)>,
}

fn streams_for(spec: &HovrSpec, arch: &MlpArchitecture) -> Result<Streams> {
    if spec.domain.dim() != arch.input_dim {
        return Err(Error::InputShape {
            expected: arch.input_dim,
            got: spec.domain.dim(),
        });
    }
    let mut plan = StreamPlan::value_only();
    let mut terms = Vec::with_capacity(spec.weights.len());
    for (mi, w) in &spec.weights {
        terms.push((plan.request(&mi.0, arch.input_dim)?, *w));
    }
    Ok(Streams { plan, terms })
}

const CHUNK: usize = 1024;

/// Weighted `Σ_m scale·|d|^q` over `points`, accumulating `∂/∂θ` into `grad` when given.
#[allow(clippy::too_many_arguments)]
fn accumulate(
    theta: &[f64],
    arch: &MlpArchitecture,
    streams: &Streams,
    q: f64,
    scale: f64,
    points: ArrayView2<'_, f64>,
    mut grad: Option<&mut [f64]>,
    kinks: &mut usize,
) -> Result<f64> {
    let mut total = 0.0;
    let mut start = 0;
    while start < points.nrows() {
        let end = (start + CHUNK).min(points.nrows());
        let pass = batch::forward(theta, arch, points.slice(ndarray::s![start..end, ..]), &streams.plan)?;
        let mut cot = grad.as_ref().map(|_| pass.cotangent());
        for &(stream, w) in &streams.terms {
            if w == 0.0 {
                continue;
            }
            let d = pass.output(stream).to_owned();
            total += scale * w * d.iter().map(|v| v.abs().powf(q)).sum::<f64>();
            if let Some(cot) = cot.as_mut() {
                let mut slot = pass.cotangent_stream(cot, stream);
                for (c, &v) in slot.iter_mut().zip(d.iter()) {
                    let (slope, kink) = power_slope(v, q);
                    *kinks += kink as usize;
                    *c += scale * w * slope;
                }
            }
        }
        if let (Some(g), Some(cot)) = (grad.as_deref_mut(), cot.as_ref()) {
            pass.backward(theta, arch, cot, g);
        }
        start = end;
    }
    Ok(total)
}

fn sample_points<R: Rng + ?Sized>(domain: &DomainBox, m: usize, rng: &mut R) -> Array2<f64> {
    let j = domain.dim();
    let mut pts = Array2::zeros((m, j));
    for mut row in pts.rows_mut() {
        domain.sample_into(rng, row.as_slice_mut().expect("standard layout"));
    }
    pts
}

/// Unbiased Monte-Carlo estimate of `C_{k,q}(f_θ)` and of its θ-gradient
/// from `spec.mc_samples` uniform draws.
pub fn mc_hovr_grad<R: Rng + ?Sized>(
    theta: &ParamVector,
    arch: &MlpArchitecture,
    spec: &HovrSpec,
    rng: &mut R,
) -> Result<HovrEstimate> {
    mc_hovr_grad_with(theta, arch, spec, spec.mc_samples, rng)
}

/// As [`mc_hovr_grad`] with an explicit sample count.
pub fn mc_hovr_grad_with<R: Rng + ?Sized>(
    theta: &ParamVector,
    arch: &MlpArchitecture,
    spec: &HovrSpec,
    samples: usize,
    rng: &mut R,
) -> Result<HovrEstimate> {
    spec.validate()?;
    if samples == 0 {
        return Err(Error::config("Monte-Carlo sample count must be positive"));
    }
    if !theta.matches(arch) {
        return Err(Error::InputShape {
            expected: arch.num_params(),
            got: theta.len(),
        });
    }
    let streams = streams_for(spec, arch)?;
    let points = sample_points(&spec.domain, samples, rng);
    let scale = spec.domain.volume() / samples as f64;
    let mut grad = vec![0.0; theta.len()];
    let mut kinks = 0;
    let estimate = accumulate(
        theta.as_slice(),
        arch,
        &streams,
        spec.q,
        scale,
        points.view(),
        Some(&mut grad),
        &mut kinks,
    )?;
    Ok(HovrEstimate {
        estimate,
        grad,
        kinks,
    })
}

/// Midpoint-rule tensor-grid value of `C_{k,q}(f_θ)` for `J ≤ 3`.
pub fn quad_hovr(theta: &ParamVector, arch: &MlpArchitecture, spec: &HovrSpec, grid_per_dim: usize) -> Result<f64> {
    let j = spec.domain.dim();
    if j > 3 {
        return Err(Error::UnsupportedDimension(j));
    }
    if grid_per_dim < 2 {
        return Err(Error::config("quadrature grid needs at least 2 cells per dimension"));
    }
    spec.validate()?;
    let streams = streams_for(spec, arch)?;
    let cells = grid_per_dim.pow(j as u32);
    let (lo, hi) = (spec.domain.lower(), spec.domain.upper());
    let mut total = 0.0;
    let mut kinks = 0;
    let mut start = 0;
    while start < cells {
        let end = (start + 16 * CHUNK).min(cells);
        let mut pts = Array2::zeros((end - start, j));
        for (r, cell) in (start..end).enumerate() {
            let mut rem = cell;
            for c in 0..j {
                let idx = rem % grid_per_dim;
                rem /= grid_per_dim;
                pts[[r, c]] = lo[c] + (hi[c] - lo[c]) * (idx as f64 + 0.5) / grid_per_dim as f64;
            }
        }
        total += accumulate(theta.as_slice(), arch, &streams, spec.q, 1.0, pts.view(), None, &mut kinks)?;
        start = end;
    }
    Ok(spec.domain.volume() * total / cells as f64)
}

/// `θᵀ G θ` for a basis model `f(x) = Σ θ_l φ_l(x)` with Gram matrix
/// `G_{lm} = ∫ ∇^[k] φ_l ∇^[k] φ_m`.
pub fn basis_model_hov(gram: ArrayView2<'_, f64>, theta: &[f64]) -> Result<f64> {
    let n = gram.nrows();
    if gram.ncols() != n || theta.len() != n {
        return Err(Error::input("Gram matrix must be square and match θ"));
    }
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (gram[[i, j]], gram[[j, i]]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::input(format!("Gram matrix is not symmetric at ({i},{j})")));
            }
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += theta[i] * gram[[i, j]] * theta[j];
        }
    }
    Ok(total)
}
