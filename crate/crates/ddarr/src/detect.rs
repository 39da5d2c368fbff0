//! Runtime detection: 3σ bands with persistence, detection reports and the
//! ROC comparison experiment.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::arrgen::ResidualSpec;
use crate::error::{Error, Result};
use crate::evaluate::residual_signal;
use crate::regress::{fit_logistic, LogisticConfig};
use crate::tanksim::FaultScenario;
use crate::timeseries::Dataset;

/// Minimum normal-operation samples for learning bounds.
pub const MIN_THRESHOLD_SAMPLES: usize = 30;

/// Default alarm persistence.
pub const DEFAULT_PERSISTENCE: usize = 3;

/// Normal-operation band `mean ± 3σ` with an alarm persistence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub mean: f64,
    pub sigma: f64,
    pub upper: f64,
    pub lower: f64,
    pub persistence: usize,
}

impl Thresholds {
    pub fn new(mean: f64, sigma: f64, persistence: usize) -> Self {
        Self { mean, sigma, upper: mean + 3.0 * sigma, lower: mean - 3.0 * sigma, persistence }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }
}

/// Mean and population standard deviation of a normal-operation residual.
pub fn learn_thresholds(r_normal: &[f64], persistence: usize) -> Result<Thresholds> {
    if r_normal.len() < MIN_THRESHOLD_SAMPLES {
        return Err(Error::InsufficientSamples { needed: MIN_THRESHOLD_SAMPLES, got: r_normal.len() });
    }
    if persistence == 0 {
        return Err(Error::Validation("persistence must be ≥ 1".into()));
    }
    let n = r_normal.len() as f64;
    let rough = r_normal.iter().sum::<f64>() / n;
    let mean = rough + r_normal.iter().map(|v| v - rough).sum::<f64>() / n;
    let sigma = (r_normal.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(Thresholds::new(mean, sigma, persistence))
}

/// `alarm[t]` is set when the last `persistence` samples ending at `t` all lie
/// outside the band.
pub fn raise_alarms(signal: &[f64], th: &Thresholds) -> Vec<bool> {
    let mut run = 0usize;
    signal
        .iter()
        .map(|v| {
            run = if th.contains(*v) { 0 } else { run + 1 };
            run >= th.persistence.max(1)
        })
        .collect()
}

/// Bounds for every residual of `bank`, learned on `normal`.
pub fn learn_bank_thresholds(
    bank: &[ResidualSpec],
    normal: &Dataset,
    persistence: usize,
) -> Result<BTreeMap<String, Thresholds>> {
    bank.iter()
        .map(|s| Ok((s.name(), learn_thresholds(&residual_signal(s, normal)?, persistence)?)))
        .collect()
}

/// Detection outcome for one residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualDetection {
    pub residual: String,
    pub thresholds: Thresholds,
    /// Time of the first alarm anywhere in the record.
    pub first_alarm: Option<f64>,
    /// First alarm at or after onset, minus onset.
    pub delay: Option<f64>,
    /// Alarm episodes starting strictly before onset.
    pub false_alarms: usize,
    /// Alarm episodes as `[start, end]` times.
    pub alarm_intervals: Vec<[f64; 2]>,
    #[serde(skip)]
    pub alarms: Vec<bool>,
}

/// Alarms and delays for a bank over one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub scenario: String,
    pub onset: Option<f64>,
    /// Smallest per-residual delay.
    pub detection_delay: Option<f64>,
    /// Any alarm at or after onset (anywhere, without an onset).
    pub detected: bool,
    pub false_alarms: usize,
    pub residuals: Vec<ResidualDetection>,
}

impl DetectionReport {
    pub fn get(&self, residual: &str) -> Option<&ResidualDetection> {
        self.residuals.iter().find(|r| r.residual == residual)
    }
}

/// Evaluates all residuals of `bank` on `ds` against learned bounds.
pub fn detection_report(
    bank: &[ResidualSpec],
    ds: &Dataset,
    scenario: &FaultScenario,
    th_map: &BTreeMap<String, Thresholds>,
) -> Result<DetectionReport> {
    let onset = scenario.onset_time();
    let mut residuals = Vec::with_capacity(bank.len());
    for spec in bank {
        let name = spec.name();
        let th = *th_map
            .get(&name)
            .ok_or_else(|| Error::Configuration(format!("no thresholds for {name}")))?;
        let signal = residual_signal(spec, ds)?;
        let alarms = raise_alarms(&signal, &th);
        let lag = spec.max_lag();
        let time = |i: usize| ds.time(i + lag);
        let mut intervals = Vec::new();
        let mut start = None;
        for (i, a) in alarms.iter().enumerate() {
            match (*a, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    intervals.push([time(s), time(i - 1)]);
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            intervals.push([time(s), time(alarms.len() - 1)]);
        }
        let first_alarm = alarms.iter().position(|a| *a).map(time);
        let (delay, false_alarms) = match onset {
            Some(t_on) => {
                let delay = alarms
                    .iter()
                    .enumerate()
                    .find(|(i, a)| **a && time(*i) >= t_on - 1e-9 * ds.dt())
                    .map(|(i, _)| (time(i) - t_on).max(0.0));
                let false_alarms = intervals.iter().filter(|iv| iv[0] < t_on - 1e-9 * ds.dt()).count();
                (delay, false_alarms)
            }
            None => (None, 0),
        };
        residuals.push(ResidualDetection {
            residual: name,
            thresholds: th,
            first_alarm,
            delay,
            false_alarms,
            alarm_intervals: intervals,
            alarms,
        });
    }
    let detection_delay = residuals.iter().filter_map(|r| r.delay).min_by(f64::total_cmp);
    let detected = match onset {
        Some(_) => detection_delay.is_some(),
        None => residuals.iter().any(|r| r.first_alarm.is_some()),
    };
    Ok(DetectionReport {
        scenario: scenario.name.clone(),
        onset,
        detection_delay,
        detected,
        false_alarms: residuals.iter().map(|r| r.false_alarms).sum(),
        residuals,
    })
}

/// Empirical ROC curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false-positive rate, true-positive rate)` from `(0,0)` to `(1,1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    /// Two-column CSV `fpr,tpr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for (f, t) in &self.points {
            out.push_str(&format!("{f},{t}\n"));
        }
        out
    }
}

/// ROC over every distinct score as a cut point (higher score = faulty), with
/// trapezoidal AUC.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Schema(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Validation("NaN score".into()));
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let p = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        let last = points[points.len() - 1];
        auc += (p.0 - last.0) * (p.1 + last.1) * 0.5;
        points.push(p);
    }
    Ok(RocCurve { points, auc })
}

/// Result of the with/without-residual classifier comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocComparison {
    pub sensors: Vec<String>,
    pub residual: Option<String>,
    pub without_residual: RocCurve,
    pub with_residual: Option<RocCurve>,
}

/// A labelled dataset: samples at or after `onset` are faulty.
#[derive(Debug, Clone, Copy)]
pub struct Labelled<'a> {
    pub data: &'a Dataset,
    pub onset: f64,
}

fn features(
    ds: &Dataset,
    sensors: &[String],
    residual: Option<&ResidualSpec>,
    skip: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut cols: Vec<Vec<f64>> =
        sensors.iter().map(|s| ds.column(s).map(|c| c[skip..].to_vec())).collect::<Result<_>>()?;
    if let Some(spec) = residual {
        let r = residual_signal(spec, ds)?;
        cols.push(r[skip - spec.max_lag()..].to_vec());
    }
    Ok(cols)
}

fn labels(ds: &Dataset, onset: f64, skip: usize) -> Vec<bool> {
    let first = ds.first_index_at_or_after(onset);
    (skip..ds.len()).map(|i| i >= first).collect()
}

fn scored_roc(
    train: &Labelled<'_>,
    test: &Labelled<'_>,
    sensors: &[String],
    residual: Option<&ResidualSpec>,
    config: &LogisticConfig,
    skip: usize,
) -> Result<RocCurve> {
    let tr = features(train.data, sensors, residual, skip)?;
    let te = features(test.data, sensors, residual, skip)?;
    // Standardize with training statistics.
    let stats: Vec<(f64, f64)> = tr
        .iter()
        .map(|c| {
            let n = c.len() as f64;
            let m = c.iter().sum::<f64>() / n;
            let s = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            (m, if s > 0.0 { s } else { 1.0 })
        })
        .collect();
    let matrix = |cols: &[Vec<f64>]| {
        DMatrix::from_fn(cols[0].len(), cols.len(), |i, j| (cols[j][i] - stats[j].0) / stats[j].1)
    };
    let model = fit_logistic(&matrix(&tr), &labels(train.data, train.onset, skip), config)?;
    let scores = model.predict_proba(&matrix(&te))?;
    roc_curve(&scores, &labels(test.data, test.onset, skip))
}

/// Trains logistic classifiers on `train` and scores them on `test`, once on
/// raw sensors and once with the residual appended as a feature.
pub fn roc_experiment(
    train: Labelled<'_>,
    test: Labelled<'_>,
    sensors: &[String],
    residual: Option<&ResidualSpec>,
    config: &LogisticConfig,
) -> Result<RocComparison> {
    if sensors.is_empty() {
        return Err(Error::Validation("at least one sensor is required".into()));
    }
    let skip = residual.map_or(0, ResidualSpec::max_lag);
    let without_residual = scored_roc(&train, &test, sensors, None, config, skip)?;
    let with_residual = residual.map(|r| scored_roc(&train, &test, sensors, Some(r), config, skip)).transpose()?;
    Ok(RocComparison {
        sensors: sensors.to_vec(),
        residual: residual.map(ResidualSpec::name),
        without_residual,
        with_residual,
    })
}
