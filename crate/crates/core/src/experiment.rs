//! Experiment runners and their CSV outputs.
//!
//! Independent runs execute on a rayon pool; every file is written afterwards
//! from the calling thread, in a fixed order, so repeated runs produce
//! byte-identical outputs regardless of the worker count.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{DatasetConfig, Experiment, MethodSpec, RunConfig, SyntheticConfig};
use crate::data::{
    load_benchmark, make_synthetic, split_and_contaminate, synthetic_test_set, Dataset, SyntheticFunction,
    SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::eval::{breakdown_stress, correlations, fit, robust_validation_score, BreakdownOutcome, Estimator, Fit};
use crate::losses::TrimSpec;
use crate::model::{forward, MlpArchitecture, ParamVector};

/// Worker-count fallback read when neither the CLI nor the config sets one.
pub const WORKERS_ENV: &str = "ARTL_WORKERS";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub dataset: String,
    pub seed: u64,
    pub pmse: f64,
    pub val_score: Option<f64>,
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreakdownRow {
    pub method: String,
    pub dataset: String,
    pub seed: u64,
    pub m: usize,
    pub magnitude: f64,
    pub outcome: BreakdownOutcome,
}

/// Per-configuration means of a validation study.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSummary {
    pub method: String,
    pub dataset: String,
    pub runs: usize,
    pub mean_pmse: f64,
    pub mean_val_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationCorrelation {
    pub dataset: String,
    pub configs: usize,
    pub pearson: f64,
    pub spearman: f64,
}

#[derive(Debug)]
pub struct RunFailure {
    pub run: String,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct ExperimentOutcome {
    pub config_hash: String,
    pub results: Vec<ResultRow>,
    pub breakdown: Vec<BreakdownRow>,
    pub validation: Vec<ValidationSummary>,
    pub correlations: Vec<ValidationCorrelation>,
    pub failures: Vec<RunFailure>,
}

impl ExperimentOutcome {
    pub fn diverged(&self) -> bool {
        self.failures.iter().any(|f| matches!(f.error, Error::Diverged { .. }))
    }
}

/// First 16 hex digits of the SHA-256 of the canonical config.
pub fn config_hash(cfg: &RunConfig) -> String {
    let digest = Sha256::digest(cfg.canonical().as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Worker count: explicit setting, then `ARTL_WORKERS`, then all cores.
pub fn resolve_workers(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Writes `x1,x2,prediction,config_hash` on a `resolution × resolution`
/// lattice spanning the domain (endpoints included).
#[allow(clippy::too_many_arguments)]
pub fn dump_grid<W: Write>(
    theta: &ParamVector,
    arch: &MlpArchitecture,
    lower: &[f64],
    upper: &[f64],
    resolution: usize,
    config_hash: &str,
    out: W,
) -> Result<()> {
    if arch.input_dim != 2 || lower.len() != 2 || upper.len() != 2 {
        return Err(Error::UnsupportedDimension(arch.input_dim));
    }
    if resolution < 2 {
        return Err(Error::config("grid resolution must be at least 2"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x1", "x2", "prediction", "config_hash"])?;
    let step = |d: usize, i: usize| lower[d] + (upper[d] - lower[d]) * i as f64 / (resolution - 1) as f64;
    for i in 0..resolution {
        for j in 0..resolution {
            let x = [step(0, i), step(1, j)];
            let f = forward(theta, arch, &x)?;
            w.write_record([
                format!("{:?}", x[0]),
                format!("{:?}", x[1]),
                format!("{f:?}"),
                config_hash.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn file_stem(dataset: &str, method: &str, seed: u64) -> String {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
            .collect::<String>()
            .trim_matches('_')
            .to_string()
    };
    format!("{}__{}__seed{seed}", clean(dataset), clean(method))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.filter(|x| x.is_finite()).map_or(String::new(), |x| format!("{x:?}"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// One training run plus what is needed to write its artifacts.
struct Trained {
    row: ResultRow,
    fit: Fit,
    grid_box: Option<(Vec<f64>, Vec<f64>)>,
}

struct Job {
    dataset: String,
    method: String,
    seed: u64,
    work: Box<dyn Fn() -> Result<Trained> + Send + Sync>,
}

fn synthetic_spec(s: &SyntheticConfig, function: SyntheticFunction, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        function,
        n: s.n,
        noise_sd: s.noise_sd,
        outlier_fraction: s.outlier_fraction,
        outlier_level: s.outlier_level,
        seed,
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

/// Jobs that train every method on full synthetic data and score on a
/// noiseless test sample.
fn synthetic_jobs(cfg: &RunConfig, s: &SyntheticConfig, methods: &[MethodSpec]) -> Vec<Job> {
    let mut jobs = Vec::new();
    for &function in &s.functions {
        for m in methods {
            for &seed in &cfg.seeds {
                let trainer = m.trainer(&cfg.trainer);
                let spec = synthetic_spec(s, function, seed);
                let test_size = s.test_size;
                let estimator = m.estimator;
                let (dataset, method) = (function.to_string(), m.to_string());
                let (d2, m2) = (dataset.clone(), method.clone());
                let record = cfg.output.record_wall_time;
                jobs.push(Job {
                    dataset,
                    method,
                    seed,
                    work: Box::new(move || {
                        let data = make_synthetic(&spec)?;
                        let test = synthetic_test_set(function, test_size, seed)?;
                        let domain = SyntheticFunction::domain();
                        let (fit, secs) = timed(|| fit(estimator, &data, &domain, &trainer, seed))?;
                        Ok(Trained {
                            row: ResultRow {
                                method: m2.clone(),
                                dataset: d2.clone(),
                                seed,
                                pmse: fit.pmse(&test)?,
                                val_score: None,
                                wall_time_s: record.then_some(secs),
                            },
                            grid_box: Some((domain.lower().to_vec(), domain.upper().to_vec())),
                            fit,
                        })
                    }),
                });
            }
        }
    }
    jobs
}

fn validation_jobs(cfg: &RunConfig, s: &SyntheticConfig) -> Vec<Job> {
    let mut jobs = Vec::new();
    let v = cfg.validation.clone();
    for &function in &s.functions {
        for m in v.methods() {
            for &seed in &cfg.seeds {
                let trainer = m.trainer(&cfg.trainer);
                let spec = synthetic_spec(s, function, seed);
                let test_size = s.test_size;
                let (dataset, method) = (function.to_string(), m.to_string());
                let (d2, m2) = (dataset.clone(), method.clone());
                let (train_fraction, score_h) = (v.train_fraction, v.score_h_fraction);
                let record = cfg.output.record_wall_time;
                jobs.push(Job {
                    dataset,
                    method,
                    seed,
                    work: Box::new(move || {
                        let data = make_synthetic(&spec)?;
                        let (train, val) = split_and_contaminate(&data, train_fraction, 0.0, 0.0, seed)?;
                        let test = synthetic_test_set(function, test_size, seed)?;
                        let domain = SyntheticFunction::domain();
                        let (fit, secs) = timed(|| fit(Estimator::Artl, &train, &domain, &trainer, seed))?;
                        Ok(Trained {
                            row: ResultRow {
                                method: m2.clone(),
                                dataset: d2.clone(),
                                seed,
                                pmse: fit.pmse(&test)?,
                                val_score: Some(robust_validation_score(fit.theta(), &fit.arch, &val, score_h)?),
                                wall_time_s: record.then_some(secs),
                            },
                            grid_box: Some((domain.lower().to_vec(), domain.upper().to_vec())),
                            fit,
                        })
                    }),
                });
            }
        }
    }
    jobs
}

fn benchmark_jobs(cfg: &RunConfig, data: &Dataset, name: &str) -> Result<Vec<Job>> {
    let DatasetConfig::Csv(csv) = &cfg.dataset else {
        return Err(Error::config("benchmark experiments need a csv dataset"));
    };
    let mut jobs = Vec::new();
    for m in &cfg.methods {
        for &seed in &cfg.seeds {
            let mut trainer = m.trainer(&cfg.trainer);
            trainer.arch = MlpArchitecture::new(data.dim(), trainer.arch.hidden.clone(), trainer.arch.activation)?;
            let data = data.clone();
            let estimator = m.estimator;
            let (dataset, method) = (name.to_string(), m.to_string());
            let (d2, m2) = (dataset.clone(), method.clone());
            let (tf, of, mult) = (csv.train_fraction, csv.outlier_fraction, csv.shift_multiplier);
            let record = cfg.output.record_wall_time;
            jobs.push(Job {
                dataset,
                method,
                seed,
                work: Box::new(move || {
                    let (train, test) = split_and_contaminate(&data, tf, of, mult, seed)?;
                    let domain = train.bounding_box()?;
                    let (fit, secs) = timed(|| fit(estimator, &train, &domain, &trainer, seed))?;
                    let grid_box = (data.dim() == 2).then(|| (domain.lower().to_vec(), domain.upper().to_vec()));
                    Ok(Trained {
                        row: ResultRow {
                            method: m2.clone(),
                            dataset: d2.clone(),
                            seed,
                            pmse: fit.pmse(&test)?,
                            val_score: None,
                            wall_time_s: record.then_some(secs),
                        },
                        grid_box,
                        fit,
                    })
                }),
            });
        }
    }
    Ok(jobs)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))
}

fn write_artifacts(cfg: &RunConfig, hash: &str, job: &Job, t: &Trained) -> Result<()> {
    let stem = file_stem(&job.dataset, &job.method, job.seed);
    let dir = &cfg.output.dir;
    if cfg.output.diagnostics {
        let mut w = create(&dir.join("diagnostics").join(format!("{stem}.csv")))?;
        t.fit.report.write_diagnostics(&mut w, hash)?;
        w.flush()?;
    }
    if cfg.output.params {
        let mut w = create(&dir.join("params").join(format!("{stem}.csv")))?;
        t.fit.theta().write_csv(&mut w)?;
        writeln!(w, "# config_hash={hash}")?;
        w.flush()?;
    }
    if let (Some((lo, hi)), true) = (&t.grid_box, cfg.output.grid_resolution >= 2) {
        let mut w = create(&dir.join("grids").join(format!("{stem}.csv")))?;
        dump_grid(t.fit.theta(), &t.fit.arch, lo, hi, cfg.output.grid_resolution, hash, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn execute(cfg: &RunConfig, hash: &str, jobs: Vec<Job>, outcome: &mut ExperimentOutcome) -> Result<()> {
    let workers = resolve_workers(cfg.workers);
    let results: Vec<Result<Trained>> = pool(workers)?.install(|| jobs.par_iter().map(|j| (j.work)()).collect());
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok(t) => {
                write_artifacts(cfg, hash, job, &t)?;
                outcome.results.push(t.row);
            }
            Err(error) => outcome.failures.push(RunFailure {
                run: format!("{} / {} / seed {}", job.dataset, job.method, job.seed),
                error,
            }),
        }
    }
    Ok(())
}

fn summarize_validation(outcome: &mut ExperimentOutcome) {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in &outcome.results {
        let key = (r.dataset.clone(), r.method.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    for (dataset, method) in keys {
        let rows: Vec<&ResultRow> = outcome
            .results
            .iter()
            .filter(|r| r.dataset == dataset && r.method == method)
            .collect();
        let n = rows.len() as f64;
        outcome.validation.push(ValidationSummary {
            method,
            dataset,
            runs: rows.len(),
            mean_pmse: rows.iter().map(|r| r.pmse).sum::<f64>() / n,
            mean_val_score: rows.iter().filter_map(|r| r.val_score).sum::<f64>() / n,
        });
    }
    let mut datasets: Vec<String> = outcome.validation.iter().map(|v| v.dataset.clone()).collect();
    datasets.dedup();
    for dataset in datasets {
        let (a, b): (Vec<f64>, Vec<f64>) = outcome
            .validation
            .iter()
            .filter(|v| v.dataset == dataset)
            .map(|v| (v.mean_val_score, v.mean_pmse))
            .unzip();
        let (pearson, spearman) = correlations(&a, &b).unwrap_or((f64::NAN, f64::NAN));
        outcome.correlations.push(ValidationCorrelation {
            dataset,
            configs: a.len(),
            pearson,
            spearman,
        });
    }
}

fn breakdown_rows(cfg: &RunConfig, s: &SyntheticConfig, outcome: &mut ExperimentOutcome) -> Result<()> {
    struct BJob {
        dataset: String,
        method: String,
        seed: u64,
        m: usize,
        spec: SyntheticSpec,
        trainer: crate::eval::TrainerConfig,
    }
    let trim = TrimSpec::from_fraction(cfg.trainer.h_fraction, s.n)?;
    let m = cfg.breakdown.m.unwrap_or(s.n - trim.h());
    let mut jobs = Vec::new();
    for &function in &s.functions {
        for &lambda in &cfg.breakdown.lambdas {
            for &seed in &cfg.seeds {
                let mut trainer = cfg.trainer.clone();
                trainer.lambda = lambda;
                let mut spec = synthetic_spec(s, function, seed);
                spec.outlier_fraction = 0.0;
                let method = MethodSpec {
                    estimator: Estimator::Artl,
                    k: None,
                    lambda: Some(lambda),
                    h_fraction: None,
                };
                jobs.push(BJob {
                    dataset: function.to_string(),
                    method: method.to_string(),
                    seed,
                    m,
                    spec,
                    trainer,
                });
            }
        }
    }
    let magnitude = cfg.breakdown.magnitude;
    let results: Vec<Result<BreakdownOutcome>> = pool(resolve_workers(cfg.workers))?.install(|| {
        jobs.par_iter()
            .map(|j| {
                let clean = make_synthetic(&j.spec)?;
                breakdown_stress(&j.trainer, &clean, j.m, magnitude, j.seed)
            })
            .collect()
    });
    for (j, res) in jobs.into_iter().zip(results) {
        match res {
            Ok(o) => outcome.breakdown.push(BreakdownRow {
                method: j.method,
                dataset: j.dataset,
                seed: j.seed,
                m: j.m,
                magnitude,
                outcome: o,
            }),
            Err(error) => outcome.failures.push(RunFailure {
                run: format!("{} / {} / seed {}", j.dataset, j.method, j.seed),
                error,
            }),
        }
    }
    Ok(())
}

/// Runs the configured experiment and writes its outputs under
/// `cfg.output.dir`. Failed runs are collected in the outcome; rows from
/// the runs that finished are still written.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutcome> {
    let hash = config_hash(cfg);
    let mut outcome = ExperimentOutcome {
        config_hash: hash.clone(),
        ..Default::default()
    };
    fs::create_dir_all(&cfg.output.dir)?;
    match (&cfg.dataset, cfg.experiment) {
        (DatasetConfig::Synthetic(s), Experiment::Single) => {
            let methods = [MethodSpec::plain(cfg.loss)];
            execute(cfg, &hash, synthetic_jobs(cfg, s, &methods), &mut outcome)?;
        }
        (DatasetConfig::Synthetic(s), Experiment::SyntheticTable) => {
            execute(cfg, &hash, synthetic_jobs(cfg, s, &cfg.methods), &mut outcome)?;
        }
        (DatasetConfig::Synthetic(s), Experiment::Ablation) => {
            let arms = [
                MethodSpec::plain(Estimator::TrimmedOnly),
                MethodSpec::plain(Estimator::HovrOnly),
                MethodSpec::plain(Estimator::Artl),
            ];
            execute(cfg, &hash, synthetic_jobs(cfg, s, &arms), &mut outcome)?;
        }
        (DatasetConfig::Synthetic(s), Experiment::ValidationStudy) => {
            execute(cfg, &hash, validation_jobs(cfg, s), &mut outcome)?;
            summarize_validation(&mut outcome);
        }
        (DatasetConfig::Synthetic(s), Experiment::Breakdown) => {
            breakdown_rows(cfg, s, &mut outcome)?;
        }
        (DatasetConfig::Csv(csv), Experiment::Single | Experiment::Benchmark) => {
            let data = load_benchmark(&csv.path, &csv.spec)?;
            let mut c = cfg.clone();
            if cfg.experiment == Experiment::Single {
                c.methods = vec![MethodSpec::plain(cfg.loss)];
            }
            let jobs = benchmark_jobs(&c, &data, &csv.name)?;
            execute(&c, &hash, jobs, &mut outcome)?;
        }
        (_, e) => return Err(Error::config(format!("{e} experiments are not defined for this dataset kind"))),
    }
    write_tables(&cfg.output.dir, &outcome)?;
    Ok(outcome)
}

fn write_tables(dir: &Path, o: &ExperimentOutcome) -> Result<()> {
    let hash = o.config_hash.as_str();
    if o.breakdown.is_empty() || !o.results.is_empty() {
        let mut w = csv::Writer::from_writer(create(&dir.join("results.csv"))?);
        w.write_record(["method", "dataset", "seed", "pmse", "val_score", "wall_time_s", "config_hash"])?;
        for r in &o.results {
            w.write_record([
                r.method.clone(),
                r.dataset.clone(),
                r.seed.to_string(),
                format!("{:?}", r.pmse),
                fmt_opt(r.val_score),
                fmt_opt(r.wall_time_s),
                hash.to_string(),
            ])?;
        }
        w.flush()?;
    }
    if !o.breakdown.is_empty() {
        let mut w = csv::Writer::from_writer(create(&dir.join("breakdown.csv"))?);
        w.write_record([
            "method",
            "dataset",
            "seed",
            "m",
            "magnitude",
            "hov_contaminated",
            "hov_clean",
            "ratio",
            "config_hash",
        ])?;
        for r in &o.breakdown {
            w.write_record([
                r.method.clone(),
                r.dataset.clone(),
                r.seed.to_string(),
                r.m.to_string(),
                format!("{:?}", r.magnitude),
                format!("{:?}", r.outcome.hov_contaminated),
                format!("{:?}", r.outcome.hov_clean),
                format!("{:?}", r.outcome.ratio()),
                hash.to_string(),
            ])?;
        }
        w.flush()?;
    }
    if !o.validation.is_empty() {
        let mut w = csv::Writer::from_writer(create(&dir.join("validation_summary.csv"))?);
        w.write_record(["method", "dataset", "runs", "mean_pmse", "mean_val_score", "config_hash"])?;
        for v in &o.validation {
            w.write_record([
                v.method.clone(),
                v.dataset.clone(),
                v.runs.to_string(),
                format!("{:?}", v.mean_pmse),
                format!("{:?}", v.mean_val_score),
                hash.to_string(),
            ])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_writer(create(&dir.join("validation_correlation.csv"))?);
        w.write_record(["dataset", "configs", "pearson", "spearman", "config_hash"])?;
        for c in &o.correlations {
            w.write_record([
                c.dataset.clone(),
                c.configs.to_string(),
                fmt_opt(Some(c.pearson)),
                fmt_opt(Some(c.spearman)),
                hash.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Output path helper for callers that want to read results back.
pub fn results_path(cfg: &RunConfig) -> PathBuf {
    cfg.output.dir.join("results.csv")
}
