//! Line-oriented `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are dotted
//! (`hovr.k = 2`); lists are comma-separated. Unknown keys, duplicates and
//! unparsable values are reported with their line number.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{BenchmarkSpec, NonNumeric, SyntheticFunction};
use crate::error::{Error, Result};
use crate::eval::{Estimator, LambdaScale, TrainerConfig, XiInit};
use crate::model::{Activation, MlpArchitecture};
use crate::optimizer::{AdamParams, Method, Schedule, ScheduleKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Single,
    SyntheticTable,
    Ablation,
    ValidationStudy,
    Benchmark,
    Breakdown,
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "single" => Experiment::Single,
            "synthetic_table" => Experiment::SyntheticTable,
            "ablation" => Experiment::Ablation,
            "validation_study" => Experiment::ValidationStudy,
            "benchmark" => Experiment::Benchmark,
            "breakdown" => Experiment::Breakdown,
            _ => {
                return Err(format!(
                    "unknown experiment `{s}` (expected single, synthetic_table, ablation, validation_study, benchmark or breakdown)"
                ))
            }
        })
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Single => "single",
            Experiment::SyntheticTable => "synthetic_table",
            Experiment::Ablation => "ablation",
            Experiment::ValidationStudy => "validation_study",
            Experiment::Benchmark => "benchmark",
            Experiment::Breakdown => "breakdown",
        })
    }
}

/// An estimator with optional per-method overrides, written
/// `artl(k=1,lambda=0.0001,h=0.8)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub estimator: Estimator,
    pub k: Option<usize>,
    pub lambda: Option<f64>,
    pub h_fraction: Option<f64>,
}

impl MethodSpec {
    pub fn plain(estimator: Estimator) -> Self {
        Self {
            estimator,
            k: None,
            lambda: None,
            h_fraction: None,
        }
    }

    /// `base` with this method's overrides applied.
    pub fn trainer(&self, base: &TrainerConfig) -> TrainerConfig {
        let mut cfg = base.clone();
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(l) = self.lambda {
            cfg.lambda = l;
        }
        if let Some(h) = self.h_fraction {
            cfg.h_fraction = h;
        }
        cfg
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.estimator)?;
        let mut parts = Vec::new();
        if let Some(k) = self.k {
            parts.push(format!("k={k}"));
        }
        if let Some(l) = self.lambda {
            parts.push(format!("lambda={l}"));
        }
        if let Some(h) = self.h_fraction {
            parts.push(format!("h={h}"));
        }
        if !parts.is_empty() {
            write!(f, "({})", parts.join(";"))?;
        }
        Ok(())
    }
}

impl FromStr for MethodSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(open) => {
                let inner = s[open + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| format!("unclosed parenthesis in `{s}`"))?;
                (&s[..open], Some(inner))
            }
            None => (s, None),
        };
        let estimator: Estimator = name.trim().parse().map_err(|e: Error| e.to_string())?;
        let mut spec = MethodSpec::plain(estimator);
        for arg in args.into_iter().flat_map(|a| a.split([';', ','])) {
            let arg = arg.trim();
            if arg.is_empty() {
                continue;
            }
            let (key, value) = arg
                .split_once('=')
                .ok_or_else(|| format!("method option `{arg}` must be key=value"))?;
            let value = value.trim();
            match key.trim() {
                "k" => spec.k = Some(value.parse().map_err(|_| format!("bad k `{value}`"))?),
                "lambda" => spec.lambda = Some(value.parse().map_err(|_| format!("bad lambda `{value}`"))?),
                "h" => spec.h_fraction = Some(value.parse().map_err(|_| format!("bad h `{value}`"))?),
                other => return Err(format!("unknown method option `{other}`")),
            }
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub functions: Vec<SyntheticFunction>,
    pub n: usize,
    pub noise_sd: f64,
    pub outlier_fraction: f64,
    pub outlier_level: f64,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvConfig {
    pub path: PathBuf,
    pub name: String,
    pub spec: BenchmarkSpec,
    pub train_fraction: f64,
    pub outlier_fraction: f64,
    pub shift_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetConfig {
    Synthetic(SyntheticConfig),
    Csv(CsvConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationGrid {
    pub lambdas: Vec<f64>,
    pub ks: Vec<usize>,
    pub h_fractions: Vec<f64>,
    pub train_fraction: f64,
    pub score_h_fraction: f64,
}

impl ValidationGrid {
    pub fn methods(&self) -> Vec<MethodSpec> {
        let mut out = Vec::new();
        for &k in &self.ks {
            for &lambda in &self.lambdas {
                for &h in &self.h_fractions {
                    out.push(MethodSpec {
                        estimator: Estimator::Artl,
                        k: Some(k),
                        lambda: Some(lambda),
                        h_fraction: Some(h),
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreakdownConfig {
    /// Defaults to `n − h`.
    pub m: Option<usize>,
    pub magnitude: f64,
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Cells per axis of the prediction grid dump; 0 disables it.
    pub grid_resolution: usize,
    pub diagnostics: bool,
    pub params: bool,
    pub record_wall_time: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub dataset: DatasetConfig,
    pub loss: Estimator,
    pub methods: Vec<MethodSpec>,
    pub trainer: TrainerConfig,
    pub seeds: Vec<u64>,
    pub output: OutputConfig,
    pub workers: Option<usize>,
    pub validation: ValidationGrid,
    pub breakdown: BreakdownConfig,
}

const KEYS: &[&str] = &[
    "experiment",
    "dataset.kind",
    "dataset.function",
    "dataset.n",
    "dataset.noise_sd",
    "dataset.outlier_fraction",
    "dataset.outlier_level",
    "dataset.test_size",
    "dataset.path",
    "dataset.name",
    "dataset.target",
    "dataset.drop_columns",
    "dataset.non_numeric",
    "dataset.train_fraction",
    "dataset.shift_multiplier",
    "model.hidden",
    "model.activation",
    "loss",
    "methods",
    "trim.h_fraction",
    "trim.xi_init",
    "hovr.k",
    "hovr.q",
    "hovr.lambda",
    "hovr.lambda_scale",
    "hovr.mc_samples",
    "optimizer",
    "optimizer.rate",
    "optimizer.beta1",
    "optimizer.beta2",
    "optimizer.eps",
    "schedule",
    "schedule.gamma",
    "schedule.period",
    "iterations",
    "seeds",
    "output_dir",
    "workers",
    "output.grid_resolution",
    "output.diagnostics",
    "output.params",
    "output.record_wall_time",
    "diagnostics.criticality_every",
    "diagnostics.criticality_samples",
    "diagnostics.l_mu2",
    "huber.delta",
    "tukey.c",
    "ransac.period",
    "ransac.drop_fraction",
    "validation.lambdas",
    "validation.k",
    "validation.h_fractions",
    "validation.train_fraction",
    "validation.score_h_fraction",
    "breakdown.m",
    "breakdown.magnitude",
    "breakdown.lambdas",
];

struct Entry {
    line: usize,
    value: String,
}

struct Parser<'a> {
    path: &'a Path,
    entries: BTreeMap<String, Entry>,
}

/// Splits on commas outside parentheses.
fn split_list(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    if !cur.trim().is_empty() || !out.is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

impl<'a> Parser<'a> {
    fn new(path: &'a Path, text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::ConfigLine {
                path: path.to_path_buf(),
                line,
                message,
            };
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{trimmed}`")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(err("empty key".into()));
            }
            if !KEYS.contains(&key) {
                return Err(err(format!("unknown key `{key}`")));
            }
            if let Some(prev) = entries.get(key) {
                let prev: &Entry = prev;
                return Err(err(format!("duplicate key `{key}` (first set on line {})", prev.line)));
            }
            entries.insert(
                key.to_string(),
                Entry {
                    line,
                    value: value.trim().to_string(),
                },
            );
        }
        Ok(Self { path, entries })
    }

    fn fail(&self, key: &str, message: String) -> Error {
        Error::ConfigLine {
            path: self.path.to_path_buf(),
            line: self.entries.get(key).map_or(0, |e| e.line),
            message,
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| self.fail(key, format!("invalid value `{v}` for `{key}`: {e}"))),
        }
    }

    fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| self.fail(key, format!("invalid value `{v}` for `{key}`: {e}"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => split_list(v)
                .iter()
                .map(|item| {
                    item.parse()
                        .map_err(|e| self.fail(key, format!("invalid list item `{item}` for `{key}`: {e}")))
                })
                .collect(),
        }
    }

    fn check(&self, key: &str, ok: bool, message: &str) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(self.fail(key, message.to_string()))
        }
    }
}

/// Parses `true/false/yes/no/1/0`.
#[derive(Debug, Clone, Copy)]
struct Flag(bool);

impl FromStr for Flag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" | "on" => Ok(Flag(true)),
            "false" | "no" | "0" | "off" => Ok(Flag(false)),
            _ => Err("expected true or false".into()),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::ConfigLine {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        Self::parse(&text, path)
    }

    /// Parses `text`; relative paths resolve against the directory of `path`.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let p = Parser::new(path, text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let resolve = |s: &str| {
            let q = PathBuf::from(s);
            if q.is_absolute() {
                q
            } else {
                base.join(q)
            }
        };

        let experiment: Experiment = match p.raw("experiment") {
            Some(_) => p.get("experiment", Experiment::Single)?,
            None => {
                return Err(Error::ConfigLine {
                    path: path.to_path_buf(),
                    line: 0,
                    message: "missing required key `experiment`".into(),
                })
            }
        };

        let kind: String = p.get(
            "dataset.kind",
            if experiment == Experiment::Benchmark { "csv" } else { "synthetic" }.to_string(),
        )?;
        let dataset = match kind.as_str() {
            "synthetic" => {
                let functions: Vec<SyntheticFunction> = p.list(
                    "dataset.function",
                    if experiment == Experiment::SyntheticTable {
                        SyntheticFunction::ALL.to_vec()
                    } else {
                        vec![SyntheticFunction::Checkered]
                    },
                )?;
                p.check("dataset.function", !functions.is_empty(), "at least one function is required")?;
                let n: usize = p.get("dataset.n", 100)?;
                let side = (n as f64).sqrt().round() as usize;
                p.check("dataset.n", side >= 2 && side * side == n, "n must be a perfect square of at least 4")?;
                let outlier_fraction: f64 = p.get("dataset.outlier_fraction", 0.03)?;
                p.check(
                    "dataset.outlier_fraction",
                    (0.0..0.5).contains(&outlier_fraction),
                    "outlier fraction must lie in [0, 0.5)",
                )?;
                let noise_sd: f64 = p.get("dataset.noise_sd", 0.2)?;
                p.check("dataset.noise_sd", noise_sd >= 0.0 && noise_sd.is_finite(), "noise sd must be nonnegative")?;
                let test_size: usize = p.get("dataset.test_size", 10_000)?;
                p.check("dataset.test_size", test_size > 0, "test size must be positive")?;
                DatasetConfig::Synthetic(SyntheticConfig {
                    functions,
                    n,
                    noise_sd,
                    outlier_fraction,
                    outlier_level: p.get("dataset.outlier_level", 5.0)?,
                    test_size,
                })
            }
            "csv" => {
                let raw_path = p
                    .raw("dataset.path")
                    .ok_or_else(|| p.fail("dataset.kind", "csv datasets need `dataset.path`".into()))?;
                let full = resolve(raw_path);
                let target: String = p
                    .opt("dataset.target")?
                    .ok_or_else(|| p.fail("dataset.kind", "csv datasets need `dataset.target`".into()))?;
                let drop_columns: Vec<String> = p.list("dataset.drop_columns", Vec::new())?;
                let non_numeric = match p.get("dataset.non_numeric", "drop_rows".to_string())?.as_str() {
                    "drop_rows" => NonNumeric::DropRows,
                    "drop_columns" => NonNumeric::DropColumns,
                    other => {
                        return Err(p.fail(
                            "dataset.non_numeric",
                            format!("unknown policy `{other}` (expected drop_rows or drop_columns)"),
                        ))
                    }
                };
                let train_fraction: f64 = p.get("dataset.train_fraction", 0.7)?;
                p.check(
                    "dataset.train_fraction",
                    train_fraction > 0.0 && train_fraction < 1.0,
                    "train fraction must lie in (0, 1)",
                )?;
                let outlier_fraction: f64 = p.get("dataset.outlier_fraction", 0.05)?;
                p.check(
                    "dataset.outlier_fraction",
                    (0.0..1.0).contains(&outlier_fraction),
                    "outlier fraction must lie in [0, 1)",
                )?;
                let name = p.get(
                    "dataset.name",
                    full.file_stem().map_or("csv".to_string(), |s| s.to_string_lossy().into_owned()),
                )?;
                DatasetConfig::Csv(CsvConfig {
                    path: full,
                    name,
                    spec: BenchmarkSpec {
                        drop_columns,
                        target,
                        non_numeric,
                    },
                    train_fraction,
                    outlier_fraction,
                    shift_multiplier: p.get("dataset.shift_multiplier", 2.0)?,
                })
            }
            other => {
                return Err(p.fail("dataset.kind", format!("unknown dataset kind `{other}` (expected synthetic or csv)")))
            }
        };
        let input_dim = match &dataset {
            DatasetConfig::Synthetic(_) => Some(2),
            DatasetConfig::Csv(_) => None,
        };

        let hidden: Vec<usize> = match p.raw("model.hidden") {
            Some("" | "none") => Vec::new(),
            _ => p.list("model.hidden", vec![100, 100, 100])?,
        };
        p.check("model.hidden", hidden.iter().all(|&w| w >= 1), "hidden widths must be at least 1")?;
        let activation: Activation = p.get("model.activation", Activation::Sigmoid)?;
        // The input width of csv data is only known after loading.
        let arch = MlpArchitecture::new(input_dim.unwrap_or(1), hidden, activation)
            .map_err(|e| p.fail("model.hidden", e.to_string()))?;

        let rate: f64 = p.get("optimizer.rate", 0.01)?;
        p.check("optimizer.rate", rate > 0.0 && rate.is_finite(), "learning rate must be positive")?;
        let method = match p.get("optimizer", "adam".to_string())?.as_str() {
            "adam" => {
                let d = AdamParams::default();
                Method::Adam(AdamParams {
                    beta1: p.get("optimizer.beta1", d.beta1)?,
                    beta2: p.get("optimizer.beta2", d.beta2)?,
                    eps: p.get("optimizer.eps", d.eps)?,
                })
            }
            "sgsd" => Method::Sgsd,
            other => return Err(p.fail("optimizer", format!("unknown optimizer `{other}` (expected adam or sgsd)"))),
        };
        let kind = match p.get("schedule", "step_decay".to_string())?.as_str() {
            "step_decay" => ScheduleKind::StepDecay {
                gamma: p.get("schedule.gamma", 0.5)?,
                period: p.get("schedule.period", 1000)?,
            },
            "constant" => ScheduleKind::Constant,
            "inverse_sqrt" => ScheduleKind::InverseSqrt,
            "inverse" => ScheduleKind::Inverse,
            other => {
                return Err(p.fail(
                    "schedule",
                    format!("unknown schedule `{other}` (expected step_decay, constant, inverse_sqrt or inverse)"),
                ))
            }
        };
        let schedule = Schedule::new(kind, rate).map_err(|e| {
            let key = if p.raw("schedule.gamma").is_some() { "schedule.gamma" } else { "schedule.period" };
            p.fail(key, e.to_string())
        })?;

        let defaults = TrainerConfig::paper_default(2);
        let k: usize = p.get("hovr.k", defaults.k)?;
        p.check("hovr.k", k == 1 || k == 2, "derivative order k must be 1 or 2")?;
        let q: f64 = p.get("hovr.q", defaults.q)?;
        p.check("hovr.q", q > 0.0 && q.is_finite(), "q must be positive")?;
        let lambda: f64 = p.get("hovr.lambda", defaults.lambda)?;
        p.check("hovr.lambda", lambda >= 0.0 && lambda.is_finite(), "λ must be nonnegative")?;
        let mc_samples: usize = p.get("hovr.mc_samples", defaults.mc_samples)?;
        p.check("hovr.mc_samples", mc_samples > 0, "Monte-Carlo sample count must be positive")?;
        let h_fraction: f64 = p.get("trim.h_fraction", defaults.h_fraction)?;
        p.check("trim.h_fraction", h_fraction > 0.0 && h_fraction <= 1.0, "h fraction must lie in (0, 1]")?;
        let iterations: usize = p.get("iterations", defaults.iterations)?;
        let criticality_every: usize = p.get("diagnostics.criticality_every", 0)?;
        let criticality_samples: usize = p.get("diagnostics.criticality_samples", 4096)?;
        p.check(
            "diagnostics.criticality_samples",
            criticality_samples > 0,
            "criticality sample count must be positive",
        )?;
        let l_mu2: Option<f64> = p.opt("diagnostics.l_mu2")?;
        p.check(
            "diagnostics.l_mu2",
            l_mu2.is_none_or(|v| v > 0.0 && v * schedule.base_rate() < 2.0),
            "Lμ₂ must be positive with Lμ₂ · base rate < 2",
        )?;
        let trainer = TrainerConfig {
            arch,
            method,
            schedule,
            iterations,
            h_fraction,
            k,
            q,
            lambda,
            lambda_scale: p.get::<LambdaScale>("hovr.lambda_scale", LambdaScale::Mean)?,
            mc_samples,
            huber_delta: p.get("huber.delta", defaults.huber_delta)?,
            tukey_c: p.get("tukey.c", defaults.tukey_c)?,
            ransac_period: p.get("ransac.period", defaults.ransac_period)?,
            ransac_drop: p.get("ransac.drop_fraction", defaults.ransac_drop)?,
            criticality_every: (criticality_every > 0).then_some(criticality_every),
            criticality_samples,
            l_mu2,
            xi_init: p.get("trim.xi_init", XiInit::Zero)?,
        };
        trainer.validate().map_err(|e| p.fail("huber.delta", e.to_string()))?;

        let loss: Estimator = p.get("loss", Estimator::Artl)?;
        if experiment == Experiment::Single && loss == Estimator::Artl {
            p.check("hovr.lambda", lambda > 0.0, "loss = artl requires λ > 0")?;
            p.check("trim.h_fraction", h_fraction < 1.0, "loss = artl requires h_fraction < 1")?;
        }
        let default_methods = match experiment {
            Experiment::Benchmark => vec![
                "artl(k=1;lambda=0.0001)".parse().expect("valid"),
                "artl(k=1;lambda=0.001)".parse().expect("valid"),
                "artl(k=2;lambda=0.0001)".parse().expect("valid"),
                "artl(k=2;lambda=0.001)".parse().expect("valid"),
                MethodSpec::plain(Estimator::Huber),
                MethodSpec::plain(Estimator::Tukey),
                MethodSpec::plain(Estimator::Ransac),
            ],
            _ => vec![
                "artl(k=1)".parse().expect("valid"),
                "artl(k=2)".parse().expect("valid"),
                MethodSpec::plain(Estimator::Huber),
                MethodSpec::plain(Estimator::Tukey),
                MethodSpec::plain(Estimator::Ransac),
                MethodSpec::plain(Estimator::LinearHuber),
            ],
        };
        let methods: Vec<MethodSpec> = p.list("methods", default_methods)?;
        p.check("methods", !methods.is_empty(), "at least one method is required")?;
        for m in &methods {
            if let Some(k) = m.k {
                p.check("methods", k == 1 || k == 2, "method k must be 1 or 2")?;
            }
            if let Some(h) = m.h_fraction {
                p.check("methods", h > 0.0 && h <= 1.0, "method h must lie in (0, 1]")?;
            }
            if let Some(l) = m.lambda {
                p.check("methods", l >= 0.0 && l.is_finite(), "method λ must be nonnegative")?;
            }
        }

        let seeds: Vec<u64> = p.list("seeds", vec![0, 1, 2, 3, 4])?;
        p.check("seeds", !seeds.is_empty(), "at least one seed is required")?;
        let workers: Option<usize> = p.opt("workers")?;
        p.check("workers", workers != Some(0), "worker count must be positive")?;

        let validation = ValidationGrid {
            lambdas: p.list("validation.lambdas", vec![1e-4, 1e-3, 1e-2])?,
            ks: p.list("validation.k", vec![1, 2])?,
            h_fractions: p.list("validation.h_fractions", vec![0.8, 0.9])?,
            train_fraction: p.get("validation.train_fraction", 0.8)?,
            score_h_fraction: p.get("validation.score_h_fraction", 0.9)?,
        };
        p.check(
            "validation.k",
            validation.ks.iter().all(|&k| k == 1 || k == 2),
            "validation k values must be 1 or 2",
        )?;
        p.check(
            "validation.h_fractions",
            validation.h_fractions.iter().all(|&h| h > 0.0 && h <= 1.0),
            "validation h fractions must lie in (0, 1]",
        )?;
        p.check(
            "validation.train_fraction",
            validation.train_fraction > 0.0 && validation.train_fraction < 1.0,
            "validation train fraction must lie in (0, 1)",
        )?;
        p.check(
            "validation.score_h_fraction",
            validation.score_h_fraction > 0.0 && validation.score_h_fraction <= 1.0,
            "validation score h fraction must lie in (0, 1]",
        )?;
        if experiment == Experiment::ValidationStudy {
            p.check(
                "validation.lambdas",
                validation.methods().len() >= 3,
                "the validation grid needs at least 3 configurations",
            )?;
        }

        let breakdown = BreakdownConfig {
            m: p.opt("breakdown.m")?,
            magnitude: p.get("breakdown.magnitude", 1e6)?,
            lambdas: p.list("breakdown.lambdas", vec![1e-3, 0.0])?,
        };

        let output = OutputConfig {
            dir: resolve(&p.get("output_dir", "results".to_string())?),
            grid_resolution: p.get("output.grid_resolution", 50)?,
            diagnostics: p.get("output.diagnostics", Flag(true))?.0,
            params: p.get("output.params", Flag(true))?.0,
            record_wall_time: p.get("output.record_wall_time", Flag(false))?.0,
        };
        p.check(
            "output.grid_resolution",
            output.grid_resolution != 1,
            "grid resolution must be 0 (off) or at least 2",
        )?;

        if matches!(experiment, Experiment::Benchmark) && !matches!(dataset, DatasetConfig::Csv(_)) {
            return Err(p.fail("dataset.kind", "benchmark experiments need a csv dataset".into()));
        }
        if matches!(
            experiment,
            Experiment::SyntheticTable | Experiment::Ablation | Experiment::ValidationStudy | Experiment::Breakdown
        ) && !matches!(dataset, DatasetConfig::Synthetic(_))
        {
            return Err(p.fail("dataset.kind", format!("{experiment} experiments need a synthetic dataset")));
        }

        Ok(Self {
            experiment,
            dataset,
            loss,
            methods,
            trainer,
            seeds,
            output,
            workers,
            validation,
            breakdown,
        })
    }

    /// Canonical text of every setting that affects results (output
    /// location and worker count excluded).
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.output.dir = PathBuf::new();
        c.workers = None;
        if let DatasetConfig::Csv(csv) = &mut c.dataset {
            csv.path = csv.path.file_name().map(PathBuf::from).unwrap_or_default();
        }
        format!("{c:?}")
    }
}
