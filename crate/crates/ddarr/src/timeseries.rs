//! Uniformly sampled multivariate time series, lag/integral features and
//! chronological splitting.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prefix of materialized integral columns.
pub const INTEGRAL_PREFIX: &str = "int_";

/// Name of the integral column derived from `name`.
pub fn integral_name(name: &str) -> String {
    format!("{INTEGRAL_PREFIX}{name}")
}

/// Immutable, uniformly sampled multivariate series.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    dt: f64,
    t0: f64,
}

impl Dataset {
    /// Builds a dataset, checking names, lengths, sampling step and finiteness.
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>, dt: f64, t0: f64) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Validation(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Validation(format!("dt must be positive and finite, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(Error::Validation("t0 must be finite".into()));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::Validation("empty variable name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::NameCollision(name.clone()));
            }
        }
        let n = columns.first().map_or(0, Vec::len);
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != n {
                return Err(Error::Validation(format!(
                    "column `{name}` has {} samples, expected {n}",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("non-finite value in `{name}` at row {i}")));
            }
        }
        if !columns.is_empty() && n < 2 {
            return Err(Error::InsufficientData { needed: 2, got: n });
        }
        Ok(Self { names, columns, dt, t0 })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of samples per variable.
    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Time stamp of sample `i`.
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.index_of(name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::MissingVariable(name.to_string()))
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.names.iter().map(String::as_str).zip(self.columns.iter().map(Vec::as_slice))
    }

    /// Returns a copy extended with one more column.
    pub fn with_column(&self, name: &str, values: Vec<f64>) -> Result<Self> {
        if self.contains(name) {
            return Err(Error::NameCollision(name.to_string()));
        }
        let mut names = self.names.clone();
        let mut columns = self.columns.clone();
        names.push(name.to_string());
        columns.push(values);
        Self::new(names, columns, self.dt, self.t0)
    }

    /// Keeps only the named columns, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let columns = names
            .iter()
            .map(|n| self.column(n).map(<[f64]>::to_vec))
            .collect::<Result<Vec<_>>>()?;
        Self::new(names.iter().map(|s| s.to_string()).collect(), columns, self.dt, self.t0)
    }

    /// Contiguous sub-range of samples; the start time shifts accordingly.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start > range.end || range.end > self.len() {
            return Err(Error::Validation(format!(
                "slice {range:?} out of bounds for {} samples",
                self.len()
            )));
        }
        let columns = self.columns.iter().map(|c| c[range.clone()].to_vec()).collect();
        Self::new(self.names.clone(), columns, self.dt, self.time(range.start))
    }

    /// Samples at or after time `t`.
    pub fn since(&self, t: f64) -> Result<Self> {
        let start = self.first_index_at_or_after(t);
        self.slice(start..self.len())
    }

    /// Index of the first sample whose time is at or after `t`.
    pub fn first_index_at_or_after(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.dt - 1e-9).ceil();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.len())
        }
    }

    /// True when every sample equals the first.
    pub fn is_constant(&self, name: &str) -> Result<bool> {
        let col = self.column(name)?;
        Ok(col.iter().all(|v| *v == col[0]))
    }
}

/// Per-feature transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Identity,
    Integral,
}

/// A variable observed `lag` samples in the past, optionally integrated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureRef {
    pub variable: String,
    pub lag: usize,
    pub transform: Transform,
}

impl FeatureRef {
    pub fn new(variable: impl Into<String>, lag: usize) -> Self {
        Self { variable: variable.into(), lag, transform: Transform::Identity }
    }

    pub fn integral(variable: impl Into<String>) -> Self {
        Self { variable: variable.into(), lag: 0, transform: Transform::Integral }
    }

    /// Dataset column this feature reads.
    pub fn column_name(&self) -> String {
        match self.transform {
            Transform::Identity => self.variable.clone(),
            Transform::Integral => integral_name(&self.variable),
        }
    }

    pub fn validate(&self, max_lag: usize) -> Result<()> {
        if self.lag > max_lag {
            return Err(Error::Validation(format!("lag {} exceeds window {max_lag}", self.lag)));
        }
        if self.transform == Transform::Integral && self.lag != 0 {
            return Err(Error::Validation(
                "integral transform only allowed at lag 0; lag the materialized column instead".into(),
            ));
        }
        Ok(())
    }
}

impl fmt::Display for FeatureRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.column_name();
        if self.lag == 0 {
            write!(f, "{name}")
        } else {
            write!(f, "{name}[t-{}]", self.lag)
        }
    }
}

/// Chronological split parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.7 }
    }
}

/// Cumulative trapezoidal integral starting at zero.
pub fn integrate(series: &[f64], dt: f64) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "integration needs at least 2 samples, got {}",
            series.len()
        )));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::DegenerateInput(format!("dt must be positive, got {dt}")));
    }
    // Neumaier-compensated running sum in sample units, scaled once by dt.
    let mut out = Vec::with_capacity(series.len());
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    out.push(0.0);
    for w in series.windows(2) {
        let term = 0.5 * (w[0] + w[1]);
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        out.push(dt * (sum + comp));
    }
    Ok(out)
}

/// Appends `int_<name>` for each listed variable.
pub fn add_integral_columns(ds: &Dataset, variables: &[&str]) -> Result<Dataset> {
    let mut names = ds.names.clone();
    let mut columns = ds.columns.clone();
    for v in variables {
        let derived = integral_name(v);
        if names.contains(&derived) {
            return Err(Error::NameCollision(derived));
        }
        let values = integrate(ds.column(v)?, ds.dt)?;
        names.push(derived);
        columns.push(values);
    }
    Dataset::new(names, columns, ds.dt, ds.t0)
}

/// Largest lag among `features` (0 when empty).
pub fn max_lag(features: &[FeatureRef]) -> usize {
    features.iter().map(|f| f.lag).max().unwrap_or(0)
}

fn feature_values(ds: &Dataset, feature: &FeatureRef) -> Result<Vec<f64>> {
    let name = feature.column_name();
    match (ds.column(&name), feature.transform) {
        (Ok(col), _) => Ok(col.to_vec()),
        (Err(_), Transform::Integral) => integrate(ds.column(&feature.variable)?, ds.dt),
        (Err(e), Transform::Identity) => Err(e),
    }
}

/// Lagged regression rows `t ∈ [L, N)`: column `j` holds feature `j` at
/// `t - lag_j`, the vector holds the target at `t`.
pub fn build_design_matrix(
    ds: &Dataset,
    features: &[FeatureRef],
    target: &str,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = ds.len();
    let lag = max_lag(features);
    if lag >= n {
        return Err(Error::InsufficientData { needed: lag + 1, got: n });
    }
    for f in features {
        if f.transform == Transform::Integral && f.lag != 0 {
            return Err(Error::Validation(format!("integral feature `{f}` must have lag 0")));
        }
    }
    let y = ds.column(target)?;
    let rows = n - lag;
    let mut x = DMatrix::zeros(rows, features.len());
    for (j, f) in features.iter().enumerate() {
        let col = feature_values(ds, f)?;
        let off = lag - f.lag;
        x.column_mut(j).copy_from_slice(&col[off..off + rows]);
    }
    Ok((x, DVector::from_column_slice(&y[lag..])))
}

/// Splits chronologically: the first `⌈f·N⌉` samples train, the rest validate.
/// Each partition must keep at least `max_lag + 2` samples.
pub fn chrono_split(ds: &Dataset, spec: &SplitSpec, max_lag: usize) -> Result<(Dataset, Dataset)> {
    let f = spec.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::Validation(format!("train_fraction must be in (0,1), got {f}")));
    }
    let n = ds.len();
    let n_train = ((f * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let n_valid = n.saturating_sub(n_train);
    let needed = max_lag + 2;
    if n_train < needed || n_valid < needed {
        return Err(Error::InsufficientData { needed, got: n_train.min(n_valid) });
    }
    Ok((ds.slice(0..n_train)?, ds.slice(n_train..n)?))
}

/// Reads a dataset from CSV with a leading `time` column.
pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("time") {
        return Err(Error::Schema("first CSV column must be `time`".into()));
    }
    let names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let mut time = Vec::new();
    let mut columns = vec![Vec::new(); names.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != names.len() + 1 {
            return Err(Error::Schema(format!("row {row} has {} fields", record.len())));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Validation(format!("row {row}: cannot parse `{field}` as a number"))
            })?;
            if !v.is_finite() {
                return Err(Error::Validation(format!("row {row}: non-finite value")));
            }
            if j == 0 {
                time.push(v);
            } else {
                columns[j - 1].push(v);
            }
        }
    }
    let n = time.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let dt = (time[n - 1] - time[0]) / (n - 1) as f64;
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::Validation("time must be strictly increasing".into()));
    }
    for (i, w) in time.windows(2).enumerate() {
        let step = w[1] - w[0];
        if step <= 0.0 || ((step - dt) / dt).abs() > 1e-9 {
            return Err(Error::Validation(format!("non-uniform time step at row {}", i + 1)));
        }
    }
    Dataset::new(names, columns, dt, time[0])
}

/// Writes a dataset as CSV with a leading `time` column.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string()];
    header.extend(ds.names.iter().cloned());
    wtr.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for i in 0..ds.len() {
        record.clear();
        record.push(ds.time(i).to_string());
        record.extend(ds.columns.iter().map(|c| c[i].to_string()));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}
