//! Synthetic surfaces with outlier injection, benchmark CSV ingestion,
//! splitting and standardization.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::losses::round_half_up;
use crate::model::DomainBox;

/// Per-column affine maps applied at load time.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
}

impl Standardizer {
    pub fn raw_x(&self, col: usize, v: f64) -> f64 {
        v * self.x_scale[col] + self.x_mean[col]
    }

    pub fn raw_y(&self, v: f64) -> f64 {
        v * self.y_scale + self.y_mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Vec<f64>,
    outlier_mask: Vec<bool>,
    domain: DomainBox,
    provenance: String,
    standardizer: Option<Standardizer>,
}

impl Dataset {
    pub fn new(
        x: Array2<f64>,
        y: Vec<f64>,
        outlier_mask: Vec<bool>,
        domain: DomainBox,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if x.nrows() != y.len() || y.len() != outlier_mask.len() {
            return Err(Error::input("covariates, targets and mask must have equal length"));
        }
        if x.ncols() != domain.dim() {
            return Err(Error::InputShape {
                expected: domain.dim(),
                got: x.ncols(),
            });
        }
        Ok(Self {
            x,
            y,
            outlier_mask,
            domain,
            provenance: provenance.into(),
            standardizer: None,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn outlier_mask(&self) -> &[bool] {
        &self.outlier_mask
    }

    pub fn num_outliers(&self) -> usize {
        self.outlier_mask.iter().filter(|&&m| m).count()
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn standardizer(&self) -> Option<&Standardizer> {
        self.standardizer.as_ref()
    }

    pub fn with_domain(mut self, domain: DomainBox) -> Result<Self> {
        if domain.dim() != self.dim() {
            return Err(Error::InputShape {
                expected: self.dim(),
                got: domain.dim(),
            });
        }
        self.domain = domain;
        Ok(self)
    }

    /// Rows `indices`, keeping the parent's domain.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            outlier_mask: indices.iter().map(|&i| self.outlier_mask[i]).collect(),
            domain: self.domain.clone(),
            provenance: self.provenance.clone(),
            standardizer: self.standardizer.clone(),
        }
    }

    /// Replaces the targets at `indices` with `value` and flags them.
    pub fn replace_targets(&mut self, indices: &[usize], value: f64) {
        for &i in indices {
            self.y[i] = value;
            self.outlier_mask[i] = true;
        }
    }

    /// Smallest box holding every row; degenerate axes are widened by ±0.5.
    pub fn bounding_box(&self) -> Result<DomainBox> {
        bounding_box(self.x.view())
    }

    /// `x_1..x_J, y, is_outlier`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim()).map(|j| format!("x_{j}")).collect();
        header.push("y".into());
        header.push("is_outlier".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(format!("{:?}", self.y[i]));
            rec.push(u8::from(self.outlier_mask[i]).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn bounding_box(x: ArrayView2<'_, f64>) -> Result<DomainBox> {
    if x.nrows() == 0 {
        return Err(Error::EmptyData);
    }
    let mut lower = Vec::with_capacity(x.ncols());
    let mut upper = Vec::with_capacity(x.ncols());
    for col in x.columns() {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            lower.push(lo);
            upper.push(hi);
        } else {
            lower.push(lo - 0.5);
            upper.push(hi + 0.5);
        }
    }
    DomainBox::new(lower, upper)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SyntheticFunction {
    Checkered,
    Volcano,
    Stripe,
    Plane,
}

impl SyntheticFunction {
    pub const ALL: [SyntheticFunction; 4] = [
        SyntheticFunction::Checkered,
        SyntheticFunction::Volcano,
        SyntheticFunction::Stripe,
        SyntheticFunction::Plane,
    ];

    pub fn eval(self, x: &[f64]) -> f64 {
        let (x1, x2) = (x[0], x[1]);
        match self {
            SyntheticFunction::Checkered => (2.0 * x1).sin() * (2.0 * x2).cos(),
            SyntheticFunction::Volcano => {
                let r2 = (x1 - PI).powi(2) + (x2 - PI).powi(2);
                (-(r2 - 1.0).powi(2)).exp()
            }
            SyntheticFunction::Stripe => (2.0 * (x1 + x2)).sin(),
            SyntheticFunction::Plane => x1 - x2,
        }
    }

    pub fn domain() -> DomainBox {
        DomainBox::cube(2, 0.0, 2.0 * PI).expect("valid square")
    }
}

impl fmt::Display for SyntheticFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticFunction::Checkered => "checkered",
            SyntheticFunction::Volcano => "volcano",
            SyntheticFunction::Stripe => "stripe",
            SyntheticFunction::Plane => "plane",
        })
    }
}

impl FromStr for SyntheticFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "checkered" => Ok(SyntheticFunction::Checkered),
            "volcano" => Ok(SyntheticFunction::Volcano),
            "stripe" => Ok(SyntheticFunction::Stripe),
            "plane" => Ok(SyntheticFunction::Plane),
            other => Err(Error::config(format!(
                "unknown function `{other}` (expected checkered, volcano, stripe or plane)"
            ))),
        }
    }
}

/// Ground-truth surface by name.
pub fn true_function(name: &str, x: &[f64]) -> Result<f64> {
    if x.len() != 2 {
        return Err(Error::InputShape {
            expected: 2,
            got: x.len(),
        });
    }
    Ok(name.parse::<SyntheticFunction>()?.eval(x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub function: SyntheticFunction,
    pub n: usize,
    pub noise_sd: f64,
    pub outlier_fraction: f64,
    pub outlier_level: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// `n = 100` grid, noise sd 0.2, 3% outliers at level 5.
    pub fn paper_default(function: SyntheticFunction, seed: u64) -> Self {
        Self {
            function,
            n: 100,
            noise_sd: 0.2,
            outlier_fraction: 0.03,
            outlier_level: 5.0,
            seed,
        }
    }

    pub fn grid_side(&self) -> Result<usize> {
        let side = (self.n as f64).sqrt().round() as usize;
        if side < 2 || side * side != self.n {
            return Err(Error::config(format!("synthetic n = {} must be a perfect square ≥ 4", self.n)));
        }
        Ok(side)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid_side()?;
        if !(0.0..0.5).contains(&self.outlier_fraction) {
            return Err(Error::config("outlier fraction must lie in [0, 0.5)"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::config("noise sd must be nonnegative"));
        }
        Ok(())
    }
}

/// Inclusive grid over `[0, 2π]²` with Gaussian noise and `round(fraction·n)`
/// targets replaced by `level + U[-0.1, 0.1]`.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let side = spec.grid_side()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let step = 2.0 * PI / (side - 1) as f64;
    let coord = |i: usize| if i == side - 1 { 2.0 * PI } else { i as f64 * step };
    let mut x = Array2::zeros((spec.n, 2));
    let mut y = Vec::with_capacity(spec.n);
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::config(e.to_string()))?;
    for a in 0..side {
        for b in 0..side {
            let i = a * side + b;
            x[[i, 0]] = coord(a);
            x[[i, 1]] = coord(b);
            let f = spec.function.eval(&[x[[i, 0]], x[[i, 1]]]);
            y.push(f + noise.sample(&mut rng));
        }
    }
    let count = round_half_up(spec.outlier_fraction * spec.n as f64);
    let mut mask = vec![false; spec.n];
    for i in rand::seq::index::sample(&mut rng, spec.n, count).into_vec() {
        y[i] = spec.outlier_level + rng.random_range(-0.1..=0.1);
        mask[i] = true;
    }
    Dataset::new(
        x,
        y,
        mask,
        SyntheticFunction::domain(),
        format!("synthetic:{}:n={}:seed={}", spec.function, spec.n, spec.seed),
    )
}

/// Uniform random points on `[0, 2π]²` with noiseless targets.
pub fn synthetic_test_set(function: SyntheticFunction, n_test: usize, seed: u64) -> Result<Dataset> {
    let domain = SyntheticFunction::domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57_5e7d);
    let mut x = Array2::zeros((n_test, 2));
    let mut y = Vec::with_capacity(n_test);
    for mut row in x.rows_mut() {
        let r = row.as_slice_mut().expect("standard layout");
        domain.sample_into(&mut rng, r);
        y.push(function.eval(r));
    }
    Dataset::new(
        x,
        y,
        vec![false; n_test],
        domain,
        format!("synthetic-test:{function}:n={n_test}:seed={seed}"),
    )
}

/// What to do with cells that do not parse as numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NonNumeric {
    /// Remove every row holding such a cell.
    #[default]
    DropRows,
    /// Remove every covariate column holding such a cell (rows with a
    /// non-numeric target are still removed).
    DropColumns,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkSpec {
    pub drop_columns: Vec<String>,
    pub target: String,
    pub non_numeric: NonNumeric,
}

impl BenchmarkSpec {
    /// Auto MPG: drop `origin` and `car_name`; `horsepower` has missing
    /// cells, so the column goes rather than six rows (`n = 398, J = 5`).
    pub fn auto_mpg() -> Self {
        Self {
            drop_columns: vec!["origin".into(), "car_name".into()],
            target: "mpg".into(),
            non_numeric: NonNumeric::DropColumns,
        }
    }

    /// Real Estate Valuation: drop the row number, transaction date and coordinates.
    pub fn real_estate() -> Self {
        Self {
            drop_columns: vec![
                "No".into(),
                "X1 transaction date".into(),
                "X5 latitude".into(),
                "X6 longitude".into(),
            ],
            target: "Y house price of unit area".into(),
            non_numeric: NonNumeric::DropRows,
        }
    }
}

fn normalize_name(s: &str) -> String {
    s.trim()
        .chars()
        .map(|c| if c == ' ' || c == '-' { '_' } else { c.to_ascii_lowercase() })
        .collect()
}

fn parse_cell(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

pub fn load_benchmark(path: impl AsRef<Path>, spec: &BenchmarkSpec) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut data = parse_benchmark(file, spec)?;
    data.provenance = format!("csv:{}", path.display());
    Ok(data)
}

/// Parses a headed, comma-separated table, applies the column policy and
/// standardizes covariates and target to zero mean and unit variance.
pub fn parse_benchmark<R: Read>(input: R, spec: &BenchmarkSpec) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let names: Vec<String> = headers.iter().map(|h| normalize_name(h)).collect();
    let target_name = normalize_name(&spec.target);
    let target = names
        .iter()
        .position(|n| *n == target_name)
        .ok_or_else(|| Error::Schema(format!("target column `{}` not found", spec.target)))?;
    let dropped: HashSet<String> = spec.drop_columns.iter().map(|c| normalize_name(c)).collect();
    let mut keep: Vec<usize> = (0..headers.len())
        .filter(|&c| c != target && !dropped.contains(&names[c]))
        .collect();

    let mut raw: Vec<Vec<Option<f64>>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        raw.push(record.iter().map(parse_cell).collect());
    }
    raw.retain(|row| row[target].is_some());
    if spec.non_numeric == NonNumeric::DropColumns {
        keep.retain(|&c| raw.iter().all(|row| row[c].is_some()));
    }
    raw.retain(|row| keep.iter().all(|&c| row[c].is_some()));
    if raw.is_empty() {
        return Err(Error::EmptyData);
    }
    if keep.is_empty() {
        return Err(Error::Schema("no numeric covariate columns remain".into()));
    }

    let n = raw.len();
    let j = keep.len();
    let mut x = Array2::zeros((n, j));
    let mut y = Vec::with_capacity(n);
    for (i, row) in raw.iter().enumerate() {
        for (c, &col) in keep.iter().enumerate() {
            x[[i, c]] = row[col].expect("filtered");
        }
        y.push(row[target].expect("filtered"));
    }

    let (x_mean, x_scale): (Vec<f64>, Vec<f64>) = x.columns().into_iter().map(|c| moments(c.iter().copied())).unzip();
    for (c, mut col) in x.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|v| (v - x_mean[c]) / x_scale[c]);
    }
    let (y_mean, y_scale) = moments(y.iter().copied());
    for v in &mut y {
        *v = (*v - y_mean) / y_scale;
    }
    let domain = bounding_box(x.view())?;
    let mut data = Dataset::new(x, y, vec![false; n], domain, "csv")?;
    data.standardizer = Some(Standardizer {
        x_mean,
        x_scale,
        y_mean,
        y_scale,
    });
    Ok(data)
}

/// Mean and population standard deviation (1 when the spread is zero).
fn moments(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Random split with `n_test = floor((1 − train_fraction)·n)`; then
/// `round(outlier_fraction · n_train)` training targets are shifted by
/// `shift_multiplier · sd(y_train)`.
pub fn split_and_contaminate(
    data: &Dataset,
    train_fraction: f64,
    outlier_fraction: f64,
    shift_multiplier: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config("train fraction must lie in (0, 1)"));
    }
    if !(0.0..1.0).contains(&outlier_fraction) {
        return Err(Error::config("outlier fraction must lie in [0, 1)"));
    }
    let n = data.len();
    let n_test = ((1.0 - train_fraction) * n as f64 + 1e-9).floor() as usize;
    let n_train = n - n_test;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut train = data.subset(&order[..n_train]);
    let test = data.subset(&order[n_train..]);
    let count = round_half_up(outlier_fraction * n_train as f64).min(n_train);
    if count > 0 {
        let shift = shift_multiplier * std_dev(&train.y);
        for i in rand::seq::index::sample(&mut rng, n_train, count).into_vec() {
            train.y[i] += shift;
            train.outlier_mask[i] = true;
        }
    }
    Ok((train, test))
}
