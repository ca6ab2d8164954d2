//! Held-out metrics, rank statistics, the estimator zoo used in
//! experiments, and the contamination stress test.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::diff::batch;
use crate::error::{Error, Result};
use crate::hovr::{quad_hovr, HovrSpec, DEFAULT_MC_SAMPLES};
use crate::losses::{inner_min_xi, trimmed_loss, AugmentedState, TrimSpec, DEFAULT_HUBER_DELTA, DEFAULT_TUKEY_C};
use crate::model::{init, DomainBox, MlpArchitecture, ParamVector};
use crate::optimizer::{train, AdamParams, DataLoss, Method, Problem, RunOptions, Schedule, SgsdReport};

fn residuals(theta: &ParamVector, arch: &MlpArchitecture, data: &Dataset) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if !theta.matches(arch) {
        return Err(Error::InputShape {
            expected: arch.num_params(),
            got: theta.len(),
        });
    }
    let f = batch::predict(theta.as_slice(), arch, data.x())?;
    Ok(data.y().iter().zip(f.iter()).map(|(y, f)| f - y).collect())
}

/// Mean squared prediction error on `test`.
pub fn pmse(theta: &ParamVector, arch: &MlpArchitecture, test: &Dataset) -> Result<f64> {
    let r = residuals(theta, arch, test)?;
    Ok(r.iter().map(|e| e * e).sum::<f64>() / r.len() as f64)
}

/// Trimmed loss of validation residuals with `h = round(h_fraction · n)`.
pub fn robust_validation_score(
    theta: &ParamVector,
    arch: &MlpArchitecture,
    val: &Dataset,
    h_fraction: f64,
) -> Result<f64> {
    let r = residuals(theta, arch, val)?;
    let trim = TrimSpec::from_fraction(h_fraction, r.len())?;
    Ok(trimmed_loss(&r, trim))
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// One-based ranks, ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// `(pearson, spearman)`.
pub fn correlations(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::input(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 3 {
        return Err(Error::input("correlations need at least 3 points"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::input("correlation inputs must be finite"));
    }
    let p = pearson(a, b)?;
    let s = pearson(&average_ranks(a), &average_ranks(b))?;
    Ok((p, s))
}

/// How a configured λ maps onto the integral-scaled HOV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LambdaScale {
    /// λ multiplies the domain average of the variation, i.e. `C / vol(Ω)`.
    #[default]
    Mean,
    /// λ multiplies the integral `C` itself.
    Integral,
}

impl LambdaScale {
    pub fn effective(self, lambda: f64, domain: &DomainBox) -> f64 {
        match self {
            LambdaScale::Mean => lambda / domain.volume(),
            LambdaScale::Integral => lambda,
        }
    }
}

impl fmt::Display for LambdaScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LambdaScale::Mean => "mean",
            LambdaScale::Integral => "integral",
        })
    }
}

impl FromStr for LambdaScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(LambdaScale::Mean),
            "integral" => Ok(LambdaScale::Integral),
            other => Err(Error::config(format!("unknown λ scale `{other}` (expected mean or integral)"))),
        }
    }
}

/// The fitting procedures compared in experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// Trimmed loss with HOVR.
    Artl,
    /// Trimmed loss alone (λ = 0).
    TrimmedOnly,
    /// HOVR with no trimming (h = n).
    HovrOnly,
    Mse,
    Huber,
    Tukey,
    /// Phase-wise exclusion of the worst-fitting samples.
    Ransac,
    /// Affine model on the Huber loss.
    LinearHuber,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Artl => "artl",
            Estimator::TrimmedOnly => "trimmed_only",
            Estimator::HovrOnly => "hovr_only",
            Estimator::Mse => "mse",
            Estimator::Huber => "huber",
            Estimator::Tukey => "tukey",
            Estimator::Ransac => "ransac-like",
            Estimator::LinearHuber => "linear_huber",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "artl" => Estimator::Artl,
            "trimmed_only" => Estimator::TrimmedOnly,
            "hovr_only" => Estimator::HovrOnly,
            "mse" => Estimator::Mse,
            "huber" => Estimator::Huber,
            "tukey" => Estimator::Tukey,
            "ransac" | "ransac-like" => Estimator::Ransac,
            "linear_huber" => Estimator::LinearHuber,
            other => return Err(Error::config(format!("unknown method `{other}`"))),
        })
    }
}

/// Starting value of the auxiliary vector ξ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XiInit {
    #[default]
    Zero,
    /// The exact inner minimizer for the initial residuals, so training
    /// starts on the trimmed-loss surface.
    InnerMin,
}

impl fmt::Display for XiInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            XiInit::Zero => "zero",
            XiInit::InnerMin => "inner_min",
        })
    }
}

impl FromStr for XiInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(XiInit::Zero),
            "inner_min" => Ok(XiInit::InnerMin),
            other => Err(Error::config(format!("unknown ξ initialization `{other}` (expected zero or inner_min)"))),
        }
    }
}

/// Shared training settings for every estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub arch: MlpArchitecture,
    pub method: Method,
    pub schedule: Schedule,
    pub iterations: usize,
    pub h_fraction: f64,
    pub k: usize,
    pub q: f64,
    pub lambda: f64,
    pub lambda_scale: LambdaScale,
    pub mc_samples: usize,
    pub huber_delta: f64,
    pub tukey_c: f64,
    pub ransac_period: usize,
    pub ransac_drop: f64,
    pub criticality_every: Option<usize>,
    pub criticality_samples: usize,
    /// Stopping-index proxy for `L·μ₂`; `None` gives `Lμ₂ · max ω = 1`.
    pub l_mu2: Option<f64>,
    pub xi_init: XiInit,
}

impl TrainerConfig {
    /// 3×100 sigmoid MLP, Adam at 0.01 halved every 1000 of 5000 steps,
    /// λ = 1e-3, k = 2, q = 2, h = 0.9n.
    pub fn paper_default(input_dim: usize) -> Self {
        Self {
            arch: MlpArchitecture::paper_default(input_dim),
            method: Method::Adam(AdamParams::default()),
            schedule: Schedule::paper_step_decay(0.01).expect("valid schedule"),
            iterations: 5000,
            h_fraction: 0.9,
            k: 2,
            q: 2.0,
            lambda: 1e-3,
            lambda_scale: LambdaScale::Mean,
            mc_samples: DEFAULT_MC_SAMPLES,
            huber_delta: DEFAULT_HUBER_DELTA,
            tukey_c: DEFAULT_TUKEY_C,
            ransac_period: 500,
            ransac_drop: 0.1,
            criticality_every: None,
            criticality_samples: 4096,
            l_mu2: None,
            xi_init: XiInit::Zero,
        }
    }

    /// Diagonal HOVR spec over `domain` with the configured λ scaling applied.
    pub fn hovr_spec(&self, domain: &DomainBox) -> Result<HovrSpec> {
        HovrSpec::diagonal(
            self.k,
            self.q,
            self.lambda_scale.effective(self.lambda, domain),
            domain.clone(),
            self.mc_samples,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_fraction > 0.0 && self.h_fraction <= 1.0) {
            return Err(Error::config(format!("h fraction {} must lie in (0, 1]", self.h_fraction)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("λ must be nonnegative"));
        }
        if !(self.huber_delta > 0.0) || !(self.tukey_c > 0.0) {
            return Err(Error::config("Huber δ and Tukey c must be positive"));
        }
        if self.ransac_period == 0 || !(0.0..1.0).contains(&self.ransac_drop) {
            return Err(Error::config("RANSAC period must be positive and drop fraction in [0, 1)"));
        }
        if self.criticality_every == Some(0) {
            return Err(Error::config("criticality cadence must be positive"));
        }
        Ok(())
    }
}

/// A trained model with its trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub estimator: Estimator,
    pub arch: MlpArchitecture,
    pub report: SgsdReport,
}

impl Fit {
    pub fn theta(&self) -> &ParamVector {
        &self.report.state.theta
    }

    pub fn pmse(&self, test: &Dataset) -> Result<f64> {
        pmse(self.theta(), &self.arch, test)
    }
}

/// Trains `estimator` on `data`; HOVR integrates over `domain`.
pub fn fit(estimator: Estimator, data: &Dataset, domain: &DomainBox, cfg: &TrainerConfig, seed: u64) -> Result<Fit> {
    cfg.validate()?;
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    let arch = match estimator {
        Estimator::LinearHuber => MlpArchitecture::linear(data.dim()),
        _ => cfg.arch.clone(),
    };
    if arch.input_dim != data.dim() {
        return Err(Error::InputShape {
            expected: arch.input_dim,
            got: data.dim(),
        });
    }
    let spec = cfg.hovr_spec(domain)?;
    let (loss, lambda) = match estimator {
        Estimator::Artl => (DataLoss::Artl(TrimSpec::from_fraction(cfg.h_fraction, n)?), spec.lambda),
        Estimator::TrimmedOnly => (DataLoss::Artl(TrimSpec::from_fraction(cfg.h_fraction, n)?), 0.0),
        Estimator::HovrOnly => (DataLoss::Artl(TrimSpec::new(n, n)?), spec.lambda),
        Estimator::Mse => (DataLoss::Mse, 0.0),
        Estimator::Huber | Estimator::LinearHuber => (DataLoss::Huber { delta: cfg.huber_delta }, 0.0),
        Estimator::Tukey => (DataLoss::Tukey { c: cfg.tukey_c }, 0.0),
        Estimator::Ransac => (
            DataLoss::Ransac {
                period: cfg.ransac_period,
                drop_fraction: cfg.ransac_drop,
            },
            0.0,
        ),
    };
    let spec = spec.with_lambda(lambda);
    let problem = Problem::new(data, &arch, loss, Some(&spec));
    let xi_len = if loss.uses_xi() { n } else { 0 };
    let mut state = AugmentedState::new(init(&arch, seed), xi_len);
    if let (DataLoss::Artl(trim), XiInit::InnerMin) = (loss, cfg.xi_init) {
        let f = batch::predict(state.theta.as_slice(), &arch, data.x())?;
        let r: Vec<f64> = data.y().iter().zip(f.iter()).map(|(y, f)| y - f).collect();
        state.xi = inner_min_xi(&r, trim).0;
    }
    let mut opts = RunOptions::new(cfg.iterations, seed);
    opts.criticality_every = cfg.criticality_every;
    opts.criticality_samples = cfg.criticality_samples;
    opts.l_mu2 = cfg.l_mu2;
    let report = train(&problem, state, cfg.method, &cfg.schedule, &opts)?;
    Ok(Fit {
        estimator,
        arch,
        report,
    })
}

pub fn nn_huber(data: &Dataset, cfg: &TrainerConfig, seed: u64) -> Result<Fit> {
    fit(Estimator::Huber, data, data.domain(), cfg, seed)
}

pub fn nn_tukey(data: &Dataset, cfg: &TrainerConfig, seed: u64) -> Result<Fit> {
    fit(Estimator::Tukey, data, data.domain(), cfg, seed)
}

pub fn nn_ransac(data: &Dataset, cfg: &TrainerConfig, seed: u64) -> Result<Fit> {
    fit(Estimator::Ransac, data, data.domain(), cfg, seed)
}

pub fn linear_huber(data: &Dataset, cfg: &TrainerConfig, seed: u64) -> Result<Fit> {
    fit(Estimator::LinearHuber, data, data.domain(), cfg, seed)
}

/// HOV of the fits with and without contamination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakdownOutcome {
    pub hov_contaminated: f64,
    pub hov_clean: f64,
}

impl BreakdownOutcome {
    pub fn ratio(&self) -> f64 {
        self.hov_contaminated / self.hov_clean
    }
}

/// Quadrature cells per axis when scoring breakdown fits.
pub const BREAKDOWN_GRID: usize = 200;

/// Replaces `m` randomly chosen targets of `clean` with `magnitude`, trains
/// ARTL on both versions with the same seed and scores each fit by
/// quadrature HOV over the clean domain.
pub fn breakdown_stress(
    cfg: &TrainerConfig,
    clean: &Dataset,
    m: usize,
    magnitude: f64,
    seed: u64,
) -> Result<BreakdownOutcome> {
    if m > clean.len() {
        return Err(Error::config(format!("cannot contaminate {m} of {} targets", clean.len())));
    }
    let mut dirty = clean.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb4ea_cd0e);
    let picks = rand::seq::index::sample(&mut rng, clean.len(), m).into_vec();
    dirty.replace_targets(&picks, magnitude);
    let domain = clean.domain();
    let score_spec = HovrSpec::diagonal(cfg.k, cfg.q, 0.0, domain.clone(), 1)?;
    let score = |data: &Dataset| -> Result<f64> {
        let f = fit(Estimator::Artl, data, domain, cfg, seed)?;
        quad_hovr(f.theta(), &f.arch, &score_spec, BREAKDOWN_GRID)
    };
    let hov_clean = score(clean)?;
    let hov_contaminated = if m == 0 { hov_clean } else { score(&dirty)? };
    Ok(BreakdownOutcome {
        hov_contaminated,
        hov_clean,
    })
}
