//! Gradient–supergradient training over `(θ, ξ)`: plain SGSD, an Adam
//! variant, learning-rate schedules, criticality and the randomized
//! stopping index.

use std::fmt;
use std::io::Write;

use ndarray::ArrayView2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::data::Dataset;
use crate::diff::batch::{self, Stream, StreamPlan};
use crate::error::{Error, Result};
use crate::hovr::{mc_hovr_grad_with, mc_rng, quad_hovr, HovrSpec};
use crate::losses::{
    artl_value, huber_loss, huber_psi, magnitude_order, round_half_up, trimmed_loss, tukey_loss, tukey_psi,
    v_h_subgradient, v_h_value, AugmentedState, TrimSpec,
};
use crate::model::MlpArchitecture;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    Constant,
    /// Multiply by `gamma` every `period` steps.
    StepDecay { gamma: f64, period: usize },
    /// `base / sqrt(1 + t)`.
    InverseSqrt,
    /// `base / (1 + t)`.
    Inverse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    kind: ScheduleKind,
    base_rate: f64,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, base_rate: f64) -> Result<Self> {
        if !(base_rate > 0.0 && base_rate.is_finite()) {
            return Err(Error::config(format!("base rate {base_rate} must be positive")));
        }
        if let ScheduleKind::StepDecay { gamma, period } = kind {
            if !(gamma > 0.0 && gamma < 1.0) {
                return Err(Error::config(format!("step decay factor {gamma} must lie in (0, 1)")));
            }
            if period == 0 {
                return Err(Error::config("step decay period must be positive"));
            }
        }
        Ok(Self { kind, base_rate })
    }

    pub fn constant(rate: f64) -> Result<Self> {
        Self::new(ScheduleKind::Constant, rate)
    }

    /// Halve every 1000 steps.
    pub fn paper_step_decay(rate: f64) -> Result<Self> {
        Self::new(
            ScheduleKind::StepDecay {
                gamma: 0.5,
                period: 1000,
            },
            rate,
        )
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn base_rate(&self) -> f64 {
        self.base_rate
    }

    /// Rate used by step `t` (zero-based).
    pub fn rate(&self, t: usize) -> f64 {
        let a = self.base_rate;
        match self.kind {
            ScheduleKind::Constant => a,
            ScheduleKind::StepDecay { gamma, period } => a * gamma.powi((t / period) as i32),
            ScheduleKind::InverseSqrt => a / (1.0 + t as f64).sqrt(),
            ScheduleKind::Inverse => a / (1.0 + t as f64),
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ScheduleKind::Constant => write!(f, "constant({})", self.base_rate),
            ScheduleKind::StepDecay { gamma, period } => {
                write!(f, "step_decay({}, gamma={gamma}, period={period})", self.base_rate)
            }
            ScheduleKind::InverseSqrt => write!(f, "inverse_sqrt({})", self.base_rate),
            ScheduleKind::Inverse => write!(f, "inverse({})", self.base_rate),
        }
    }
}

/// Per-sample data term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DataLoss {
    /// `(1/n)(‖r−ξ‖² + ‖ξ‖²) − V_h(ξ)`, optimized jointly with `ξ`.
    Artl(TrimSpec),
    Mse,
    Huber { delta: f64 },
    Tukey { c: f64 },
    /// Squared loss on an active set; every `period` steps the
    /// `drop_fraction` worst samples are excluded for the following phase.
    Ransac { period: usize, drop_fraction: f64 },
}

impl DataLoss {
    pub fn uses_xi(&self) -> bool {
        matches!(self, DataLoss::Artl(_))
    }
}

/// Everything the trainer needs besides the state.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub x: ArrayView2<'a, f64>,
    pub y: &'a [f64],
    pub arch: &'a MlpArchitecture,
    pub loss: DataLoss,
    /// Skipped entirely when `None` or when its λ is zero.
    pub hovr: Option<&'a HovrSpec>,
}

impl<'a> Problem<'a> {
    pub fn new(data: &'a Dataset, arch: &'a MlpArchitecture, loss: DataLoss, hovr: Option<&'a HovrSpec>) -> Self {
        Self {
            x: data.x(),
            y: data.y(),
            arch,
            loss,
            hovr,
        }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn active_hovr(&self) -> Option<&'a HovrSpec> {
        self.hovr.filter(|s| s.lambda > 0.0)
    }

    fn lambda(&self) -> f64 {
        self.active_hovr().map_or(0.0, |s| s.lambda)
    }

    fn report_trim(&self) -> Result<TrimSpec> {
        match self.loss {
            DataLoss::Artl(t) => Ok(t),
            _ => TrimSpec::new(self.n(), self.n()),
        }
    }

    fn validate(&self, state: &AugmentedState) -> Result<()> {
        if self.n() == 0 {
            return Err(Error::EmptyData);
        }
        if self.x.nrows() != self.n() {
            return Err(Error::input("covariate and target lengths differ"));
        }
        if !state.theta.matches(self.arch) {
            return Err(Error::InputShape {
                expected: self.arch.num_params(),
                got: state.theta.len(),
            });
        }
        let want_xi = if self.loss.uses_xi() { self.n() } else { 0 };
        if state.xi.len() != want_xi {
            return Err(Error::InputShape {
                expected: want_xi,
                got: state.xi.len(),
            });
        }
        if let DataLoss::Artl(t) = self.loss {
            TrimSpec::new(t.h(), self.n())?;
        }
        if let Some(spec) = self.active_hovr() {
            spec.validate()?;
        }
        Ok(())
    }
}

/// One stochastic evaluation at a state.
#[derive(Debug, Clone)]
struct Evaluation {
    /// `∇_θ U` (data term plus λ·MC HOVR gradient).
    grad_theta: Vec<f64>,
    /// `∇_ξ U`.
    u_xi: Vec<f64>,
    /// Chosen subgradient of `V_h`.
    v: Vec<f64>,
    residuals: Vec<f64>,
    data_value: f64,
    hov: f64,
}

impl Evaluation {
    fn direction_norm(&self) -> f64 {
        let t: f64 = self.grad_theta.iter().map(|g| g * g).sum();
        let x: f64 = self.u_xi.iter().zip(&self.v).map(|(u, v)| (u - v) * (u - v)).sum();
        (t + x).sqrt()
    }
}

fn evaluate<R: Rng + ?Sized>(
    problem: &Problem<'_>,
    state: &AugmentedState,
    active: Option<&[bool]>,
    mc_samples: Option<usize>,
    rng: &mut R,
) -> Result<Evaluation> {
    let theta = state.theta.as_slice();
    let n = problem.n();
    let plan = StreamPlan::value_only();
    let pass = batch::forward(theta, problem.arch, problem.x, &plan)?;
    let f = pass.output(Stream::Value);
    let residuals: Vec<f64> = problem.y.iter().zip(f.iter()).map(|(y, f)| y - f).collect();

    let mut cot = pass.cotangent();
    let mut u_xi = Vec::new();
    let mut v = Vec::new();
    let nf = n as f64;
    let data_value;
    {
        let mut df = pass.cotangent_stream(&mut cot, Stream::Value);
        match problem.loss {
            DataLoss::Artl(trim) => {
                let xi = &state.xi;
                u_xi = Vec::with_capacity(n);
                for i in 0..n {
                    let gap = residuals[i] - xi[i];
                    df[i] = -2.0 * gap / nf;
                    u_xi.push(-2.0 * gap / nf + 2.0 * xi[i] / nf);
                }
                v = v_h_subgradient(xi, trim);
                data_value = artl_value(&residuals, xi, trim, 0.0, 0.0);
            }
            DataLoss::Mse => {
                for i in 0..n {
                    df[i] = -2.0 * residuals[i] / nf;
                }
                data_value = residuals.iter().map(|r| r * r).sum::<f64>() / nf;
            }
            DataLoss::Huber { delta } => {
                for i in 0..n {
                    df[i] = -huber_psi(residuals[i], delta) / nf;
                }
                data_value = residuals.iter().map(|&r| huber_loss(r, delta)).sum::<f64>() / nf;
            }
            DataLoss::Tukey { c } => {
                for i in 0..n {
                    df[i] = -tukey_psi(residuals[i], c) / nf;
                }
                data_value = residuals.iter().map(|&r| tukey_loss(r, c)).sum::<f64>() / nf;
            }
            DataLoss::Ransac { .. } => {
                let count = active.map_or(n, |a| a.iter().filter(|&&b| b).count()).max(1) as f64;
                let mut total = 0.0;
                for i in 0..n {
                    if active.is_none_or(|a| a[i]) {
                        df[i] = -2.0 * residuals[i] / count;
                        total += residuals[i] * residuals[i];
                    }
                }
                data_value = total / count;
            }
        }
    }
    let mut grad_theta = vec![0.0; theta.len()];
    pass.backward(theta, problem.arch, &cot, &mut grad_theta);

    let mut hov = f64::NAN;
    if let Some(spec) = problem.active_hovr() {
        let m = mc_samples.unwrap_or(spec.mc_samples);
        let est = mc_hovr_grad_with(&state.theta, problem.arch, spec, m, rng)?;
        for (g, h) in grad_theta.iter_mut().zip(&est.grad) {
            *g += spec.lambda * h;
        }
        hov = est.estimate;
    }
    Ok(Evaluation {
        grad_theta,
        u_xi,
        v,
        residuals,
        data_value,
        hov,
    })
}

/// Adam moment parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// `(θ, ξ) ← (θ, ξ) − ω_t (u − (0, v))`.
    Sgsd,
    /// Same direction, rescaled by Adam moments.
    Adam(AdamParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub iterations: usize,
    pub seed: u64,
    /// Criticality cadence; `None` disables it.
    pub criticality_every: Option<usize>,
    pub criticality_samples: usize,
    /// Proxy for `L·μ₂` in the stopping-index weights; default makes
    /// `Lμ₂ · max ω = 1`.
    pub l_mu2: Option<f64>,
}

impl RunOptions {
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            seed,
            criticality_every: None,
            criticality_samples: 4096,
            l_mu2: None,
        }
    }

    pub fn with_criticality(mut self, every: usize, samples: usize) -> Self {
        self.criticality_every = Some(every);
        self.criticality_samples = samples;
        self
    }
}

/// Diagnostics at the state reached after `iteration` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iteration: usize,
    /// Objective with the stochastic HOV estimate.
    pub objective: f64,
    pub grad_norm: f64,
    pub criticality: Option<f64>,
    pub trimmed_loss: f64,
    pub hov_estimate: f64,
    /// Rate the next step would use.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgsdReport {
    pub records: Vec<IterRecord>,
    pub state: AugmentedState,
    /// Randomized stopping index drawn from [`StoppingTime`].
    pub stopping_index: Option<usize>,
}

impl SgsdReport {
    /// Smallest criticality seen up to and including `iteration`.
    pub fn running_min_criticality(&self, iteration: usize) -> Option<f64> {
        self.records
            .iter()
            .filter(|r| r.iteration <= iteration)
            .filter_map(|r| r.criticality)
            .reduce(f64::min)
    }

    /// `iteration,F,trimmed_loss,hov_estimate,criticality,rate,grad_norm,config_hash`.
    pub fn write_diagnostics<W: Write>(&self, out: W, config_hash: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "iteration",
            "F",
            "trimmed_loss",
            "hov_estimate",
            "criticality",
            "rate",
            "grad_norm",
            "config_hash",
        ])?;
        for r in &self.records {
            w.write_record([
                r.iteration.to_string(),
                format!("{:?}", r.objective),
                format!("{:?}", r.trimmed_loss),
                fmt_opt(Some(r.hov_estimate)),
                fmt_opt(r.criticality),
                format!("{:?}", r.rate),
                format!("{:?}", r.grad_norm),
                config_hash.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:?}"),
        _ => String::new(),
    }
}

const CRITICALITY_STREAM: u64 = 0x0c71_71ca;
const STOPPING_STREAM: u64 = 0x5709_7143;

/// Distance from `(∇_θU, ∇_ξU)` to `{0} × ∂V_h(ξ)`.
///
/// `∂V_h` pins `(2/n)ξ_i` on indices whose `|ξ_i|` is strictly among the
/// `n−h` largest and `0` on those strictly below. Indices tied at the
/// boundary magnitude take `α_i (2/n) ξ_i` with `α ∈ [0,1]` and
/// `Σα` fixed by the remaining count, so the tie block is a Euclidean
/// projection onto a capped simplex.
pub fn criticality_distance(grad_theta: &[f64], u_xi: &[f64], xi: &[f64], trim: TrimSpec) -> f64 {
    let n = xi.len();
    let theta_part: f64 = grad_theta.iter().map(|g| g * g).sum();
    let top = n - trim.h();
    if top == 0 {
        return (theta_part + u_xi.iter().map(|u| u * u).sum::<f64>()).sqrt();
    }
    let order = magnitude_order(xi);
    let boundary = xi[order[trim.h()]].abs();
    let scale = 2.0 / n as f64;
    let mut total = theta_part;
    let mut ties = Vec::new();
    let mut above = 0;
    for i in 0..n {
        let m = xi[i].abs();
        if m > boundary {
            above += 1;
            let d = u_xi[i] - scale * xi[i];
            total += d * d;
        } else if m < boundary {
            total += u_xi[i] * u_xi[i];
        } else {
            ties.push(i);
        }
    }
    let need = (top - above) as f64;
    let s = scale * boundary;
    if s == 0.0 {
        total += ties.iter().map(|&i| u_xi[i] * u_xi[i]).sum::<f64>();
        return total.sqrt();
    }
    // In units of s_i = scale·ξ_i, the target is α_i ≈ u_i / s_i.
    let a: Vec<f64> = ties.iter().map(|&i| u_xi[i] / (scale * xi[i])).collect();
    let alpha = project_capped_simplex(&a, need);
    total += a.iter().zip(&alpha).map(|(a, al)| s * s * (a - al) * (a - al)).sum::<f64>();
    total.sqrt()
}

/// Euclidean projection of `a` onto `{α ∈ [0,1]^m : Σα = c}`, `0 ≤ c ≤ m`.
pub fn project_capped_simplex(a: &[f64], c: f64) -> Vec<f64> {
    let clip = |tau: f64| -> Vec<f64> { a.iter().map(|&x| (x - tau).clamp(0.0, 1.0)).collect() };
    if a.is_empty() {
        return Vec::new();
    }
    let mut lo = a.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if clip(mid).iter().sum::<f64>() > c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    clip(0.5 * (lo + hi))
}

/// Criticality of `state` with `mc_eval_samples` HOVR samples drawn from `rng`.
pub fn criticality_estimate<R: Rng + ?Sized>(
    problem: &Problem<'_>,
    state: &AugmentedState,
    mc_eval_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if mc_eval_samples == 0 {
        return Err(Error::config("criticality needs at least one Monte-Carlo sample"));
    }
    problem.validate(state)?;
    let eval = evaluate(problem, state, None, Some(mc_eval_samples), rng)?;
    Ok(match problem.loss {
        DataLoss::Artl(trim) => criticality_distance(&eval.grad_theta, &eval.u_xi, &state.xi, trim),
        _ => eval.grad_theta.iter().map(|g| g * g).sum::<f64>().sqrt(),
    })
}

/// `ℙ(τ = s) ∝ 2ω_s − Lμ₂ ω_s²` over steps `s = 0..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingTime {
    probabilities: Vec<f64>,
}

impl StoppingTime {
    pub fn new(schedule: &Schedule, iterations: usize, l_mu2: Option<f64>) -> Result<Self> {
        if iterations == 0 {
            return Err(Error::config("stopping index needs at least one step"));
        }
        let rates: Vec<f64> = (0..iterations).map(|t| schedule.rate(t)).collect();
        let max = rates.iter().copied().fold(0.0, f64::max);
        let lm = l_mu2.unwrap_or(1.0 / max);
        if !(lm > 0.0) || lm * max >= 2.0 {
            return Err(Error::config(format!(
                "Lμ₂ = {lm} must be positive with Lμ₂·max ω < 2"
            )));
        }
        let weights: Vec<f64> = rates.iter().map(|&w| 2.0 * w - lm * w * w).collect();
        let total: f64 = weights.iter().sum();
        Ok(Self {
            probabilities: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        WeightedIndex::new(&self.probabilities)
            .expect("positive weights")
            .sample(rng)
    }
}

fn ransac_mask(residuals: &[f64], drop_fraction: f64) -> Vec<bool> {
    let n = residuals.len();
    let drop = round_half_up(drop_fraction * n as f64).min(n.saturating_sub(1));
    let mut keep = vec![true; n];
    for &i in magnitude_order(residuals).iter().rev().take(drop) {
        keep[i] = false;
    }
    keep
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Runs `opts.iterations` steps from `init`, recording diagnostics at every
/// state including the initial and final ones.
pub fn train(
    problem: &Problem<'_>,
    init: AugmentedState,
    method: Method,
    schedule: &Schedule,
    opts: &RunOptions,
) -> Result<SgsdReport> {
    problem.validate(&init)?;
    let report_trim = problem.report_trim()?;
    let lambda = problem.lambda();
    let mut state = init;
    let n_theta = state.theta.len();
    let n_xi = state.xi.len();
    let mut m1 = vec![0.0; n_theta + n_xi];
    let mut m2 = vec![0.0; n_theta + n_xi];
    let mut active: Option<Vec<bool>> = None;
    let mut records = Vec::with_capacity(opts.iterations + 1);

    for t in 0..=opts.iterations {
        if let DataLoss::Ransac { period, drop_fraction } = problem.loss {
            if t > 0 && t % period == 0 {
                let r = evaluate(
                    &Problem { hovr: None, ..*problem },
                    &state,
                    None,
                    None,
                    &mut mc_rng(opts.seed, t as u64),
                )?;
                active = Some(ransac_mask(&r.residuals, drop_fraction));
            }
        }
        let mut rng = mc_rng(opts.seed, t as u64);
        let eval = evaluate(problem, &state, active.as_deref(), None, &mut rng)?;
        if !all_finite(&eval.grad_theta) || !all_finite(&eval.u_xi) || !eval.data_value.is_finite() {
            return Err(Error::Diverged { iteration: t });
        }
        let criticality = match opts.criticality_every {
            Some(every) if t % every == 0 || t == opts.iterations => Some(criticality_estimate(
                problem,
                &state,
                opts.criticality_samples,
                &mut mc_rng(opts.seed ^ CRITICALITY_STREAM, t as u64),
            )?),
            _ => None,
        };
        let hov_term = if lambda > 0.0 { lambda * eval.hov } else { 0.0 };
        let rate = schedule.rate(t);
        records.push(IterRecord {
            iteration: t,
            objective: eval.data_value + hov_term,
            grad_norm: eval.direction_norm(),
            criticality,
            trimmed_loss: trimmed_loss(&eval.residuals, report_trim),
            hov_estimate: eval.hov,
            rate,
        });
        if t == opts.iterations {
            break;
        }

        let direction = eval
            .grad_theta
            .iter()
            .copied()
            .chain(eval.u_xi.iter().zip(&eval.v).map(|(u, v)| u - v));
        let params = state.theta.as_mut_slice().iter_mut().chain(state.xi.iter_mut());
        match method {
            Method::Sgsd => {
                for (p, g) in params.zip(direction) {
                    *p -= rate * g;
                }
            }
            Method::Adam(adam) => {
                let step = (t + 1) as i32;
                let c1 = 1.0 - adam.beta1.powi(step);
                let c2 = 1.0 - adam.beta2.powi(step);
                for (((p, g), a), b) in params.zip(direction).zip(m1.iter_mut()).zip(m2.iter_mut()) {
                    *a = adam.beta1 * *a + (1.0 - adam.beta1) * g;
                    *b = adam.beta2 * *b + (1.0 - adam.beta2) * g * g;
                    *p -= rate * (*a / c1) / ((*b / c2).sqrt() + adam.eps);
                }
            }
        }
        if !all_finite(state.theta.as_slice()) || !all_finite(&state.xi) {
            return Err(Error::Diverged { iteration: t + 1 });
        }
    }

    let stopping_index = if opts.iterations > 0 {
        let st = StoppingTime::new(schedule, opts.iterations, opts.l_mu2)?;
        Some(st.sample(&mut mc_rng(opts.seed ^ STOPPING_STREAM, 0)))
    } else {
        None
    };
    Ok(SgsdReport {
        records,
        state,
        stopping_index,
    })
}

/// One plain SGSD step on the ARTL objective with MC stream `rng`.
pub fn sgsd_step<R: Rng + ?Sized>(
    state: &AugmentedState,
    data: &Dataset,
    arch: &MlpArchitecture,
    trim: TrimSpec,
    hovr: &HovrSpec,
    rate: f64,
    rng: &mut R,
) -> Result<AugmentedState> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::config(format!("rate {rate} must be nonnegative")));
    }
    let problem = Problem::new(data, arch, DataLoss::Artl(trim), Some(hovr));
    problem.validate(state)?;
    let eval = evaluate(&problem, state, None, None, rng)?;
    if !all_finite(&eval.grad_theta) || !all_finite(&eval.u_xi) {
        return Err(Error::Diverged { iteration: 0 });
    }
    let mut next = state.clone();
    for (p, g) in next.theta.as_mut_slice().iter_mut().zip(&eval.grad_theta) {
        *p -= rate * g;
    }
    for ((x, u), v) in next.xi.iter_mut().zip(&eval.u_xi).zip(&eval.v) {
        *x -= rate * (u - v);
    }
    Ok(next)
}

/// Plain SGSD on ARTL with criticality every 100 steps at 4096 samples.
#[allow(clippy::too_many_arguments)]
pub fn run_sgsd(
    init: AugmentedState,
    data: &Dataset,
    arch: &MlpArchitecture,
    trim: TrimSpec,
    hovr: &HovrSpec,
    schedule: &Schedule,
    iterations: usize,
    seed: u64,
) -> Result<SgsdReport> {
    let problem = Problem::new(data, arch, DataLoss::Artl(trim), Some(hovr));
    let opts = RunOptions::new(iterations, seed).with_criticality(100, 4096);
    train(&problem, init, Method::Sgsd, schedule, &opts)
}

/// Adam on the ARTL direction with step decay `(gamma, period)`.
#[allow(clippy::too_many_arguments)]
pub fn run_adam_artl(
    init: AugmentedState,
    data: &Dataset,
    arch: &MlpArchitecture,
    trim: TrimSpec,
    hovr: &HovrSpec,
    base_rate: f64,
    step_decay: (f64, usize),
    iterations: usize,
    seed: u64,
) -> Result<SgsdReport> {
    let problem = Problem::new(data, arch, DataLoss::Artl(trim), Some(hovr));
    let schedule = Schedule::new(
        ScheduleKind::StepDecay {
            gamma: step_decay.0,
            period: step_decay.1,
        },
        base_rate,
    )?;
    let opts = RunOptions::new(iterations, seed);
    train(&problem, init, Method::Adam(AdamParams::default()), &schedule, &opts)
}

/// ARTL objective with exact `V_h` and quadrature HOV.
pub fn exact_objective(problem: &Problem<'_>, state: &AugmentedState, grid_per_dim: usize) -> Result<f64> {
    problem.validate(state)?;
    let f = batch::predict(state.theta.as_slice(), problem.arch, problem.x)?;
    let r: Vec<f64> = problem.y.iter().zip(f.iter()).map(|(y, f)| y - f).collect();
    let (hov, lambda) = match problem.active_hovr() {
        Some(spec) => (quad_hovr(&state.theta, problem.arch, spec, grid_per_dim)?, spec.lambda),
        None => (0.0, 0.0),
    };
    Ok(match problem.loss {
        DataLoss::Artl(trim) => artl_value(&r, &state.xi, trim, hov, lambda),
        _ => r.iter().map(|r| r * r).sum::<f64>() / r.len() as f64 + lambda * hov,
    })
}

/// `V_h` at the state's `ξ`; zero for losses without `ξ`.
pub fn v_h_at(problem: &Problem<'_>, state: &AugmentedState) -> f64 {
    match problem.loss {
        DataLoss::Artl(trim) => v_h_value(&state.xi, trim),
        _ => 0.0,
    }
}
