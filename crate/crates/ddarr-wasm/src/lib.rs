//! Browser demo: simulate a tank-1 leak, watch residuals cross their 3σ
//! bands, and compare classifiers with and without the integral residual.
//!
//! Every exported method returns a JSON string.

use ddarr::arrgen::{forward_select_with_delays, ResidualSpec, SearchConfig};
use ddarr::detect::{detection_report, learn_bank_thresholds, roc_experiment, Labelled, RocCurve};
use ddarr::regress::LogisticConfig;
use ddarr::tanksim::{simulate_with_integrals, FaultKind, FaultScenario, TankParams, MEASURED};
use ddarr::timeseries::Dataset;
use ddarr::evaluate::residual_signal;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Targets whose residuals the demo learns.
pub const DEMO_TARGETS: [&str; 2] = ["y1", "int_u1"];
/// Points kept per plotted series.
pub const MAX_POINTS: usize = 1000;

fn stride(n: usize) -> usize {
    n.div_ceil(MAX_POINTS).max(1)
}

fn thin(values: &[f64]) -> Vec<f64> {
    values.iter().step_by(stride(values.len())).copied().collect()
}

fn thin_curve(curve: &RocCurve) -> Vec<(f64, f64)> {
    let step = stride(curve.points.len());
    let mut pts: Vec<(f64, f64)> = curve.points.iter().step_by(step).copied().collect();
    if let Some(last) = curve.points.last() {
        if pts.last() != Some(last) {
            pts.push(*last);
        }
    }
    pts
}

#[derive(Debug, Serialize)]
pub struct Trace {
    pub time: Vec<f64>,
    pub normal: Vec<f64>,
    pub faulty: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct LeakView {
    pub scenario: FaultScenario,
    pub traces: Vec<(String, Trace)>,
}

#[derive(Debug, Serialize)]
pub struct ResidualView {
    pub residual: String,
    pub loads: Vec<String>,
    pub time: Vec<f64>,
    pub values: Vec<f64>,
    pub upper: f64,
    pub lower: f64,
    pub alarm_intervals: Vec<[f64; 2]>,
    pub delay: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct MonitorView {
    pub onset: f64,
    pub persistence: usize,
    pub residuals: Vec<ResidualView>,
}

#[derive(Debug, Serialize)]
pub struct RocView {
    pub residual: String,
    pub auc_without: f64,
    pub auc_with: f64,
    pub without: Vec<(f64, f64)>,
    pub with: Vec<(f64, f64)>,
}

/// Normal run and the residuals learned from it for one seed.
pub struct Session {
    params: TankParams,
    seed: u64,
    normal: Dataset,
    bank: Vec<ResidualSpec>,
}

fn scenario(kind: &str, magnitude: f64) -> ddarr::Result<FaultScenario> {
    let base = match kind {
        "incipient" => FaultScenario::incipient_tank1(),
        "abrupt" => FaultScenario::abrupt_tank1(),
        other => return Err(ddarr::Error::Validation(format!("unknown fault kind `{other}`"))),
    };
    Ok(FaultScenario { magnitude, ..base })
}

impl Session {
    pub fn new(seed: u64) -> ddarr::Result<Self> {
        let params = TankParams::default();
        let normal = simulate_with_integrals(&params, &FaultScenario::none(), seed)?;
        let config = SearchConfig::default();
        let mut bank = Vec::new();
        for target in DEMO_TARGETS {
            bank.extend(forward_select_with_delays(&normal, target, &config)?);
        }
        Ok(Self { params, seed, normal, bank })
    }

    pub fn bank(&self) -> &[ResidualSpec] {
        &self.bank
    }

    fn faulty(&self, kind: &str, magnitude: f64) -> ddarr::Result<(FaultScenario, Dataset)> {
        let s = scenario(kind, magnitude)?;
        let ds = simulate_with_integrals(&self.params, &s, self.seed)?;
        Ok((s, ds))
    }

    /// Measured tank-1 and tank-2 signals with and without the leak.
    pub fn leak(&self, kind: &str, magnitude: f64) -> ddarr::Result<LeakView> {
        let (scenario, ds) = self.faulty(kind, magnitude)?;
        let time: Vec<f64> = (0..ds.len()).map(|i| ds.time(i)).collect();
        let traces = ["y1", "y2", "y3"]
            .iter()
            .map(|name| {
                Ok((
                    name.to_string(),
                    Trace { time: thin(&time), normal: thin(self.normal.column(name)?), faulty: thin(ds.column(name)?) },
                ))
            })
            .collect::<ddarr::Result<_>>()?;
        Ok(LeakView { scenario, traces })
    }

    /// Residuals on the faulty run against bands learned on the normal run.
    pub fn monitor(&self, kind: &str, magnitude: f64, persistence: usize) -> ddarr::Result<MonitorView> {
        let (scenario, ds) = self.faulty(kind, magnitude)?;
        let th = learn_bank_thresholds(&self.bank, &self.normal, persistence)?;
        let report = detection_report(&self.bank, &ds, &scenario, &th)?;
        let residuals = self
            .bank
            .iter()
            .zip(&report.residuals)
            .map(|(spec, det)| {
                let values = residual_signal(spec, &ds)?;
                let lag = spec.max_lag();
                let time: Vec<f64> = (0..values.len()).map(|i| ds.time(i + lag)).collect();
                Ok(ResidualView {
                    residual: spec.name(),
                    loads: spec.loads.iter().map(ToString::to_string).collect(),
                    time: thin(&time),
                    values: thin(&values),
                    upper: det.thresholds.upper,
                    lower: det.thresholds.lower,
                    alarm_intervals: det.alarm_intervals.clone(),
                    delay: det.delay,
                })
            })
            .collect::<ddarr::Result<_>>()?;
        Ok(MonitorView { onset: scenario.onset, persistence, residuals })
    }

    /// Trains on the abrupt leak and tests on the incipient leak.
    pub fn roc(&self, magnitude: f64) -> ddarr::Result<RocView> {
        let residual = self
            .bank
            .iter()
            .find(|s| s.target == "int_u1")
            .ok_or_else(|| ddarr::Error::Configuration("no residual for int_u1 at this seed".into()))?;
        let (train_s, train) = self.faulty("abrupt", magnitude)?;
        let (test_s, test) = self.faulty("incipient", magnitude)?;
        let sensors: Vec<String> = MEASURED.iter().map(|s| s.to_string()).collect();
        let cmp = roc_experiment(
            Labelled { data: &train, onset: train_s.onset },
            Labelled { data: &test, onset: test_s.onset },
            &sensors,
            Some(residual),
            &LogisticConfig::default(),
        )?;
        let with = cmp.with_residual.expect("residual supplied");
        Ok(RocView {
            residual: residual.name(),
            auc_without: cmp.without_residual.auc,
            auc_with: with.auc,
            without: thin_curve(&cmp.without_residual),
            with: thin_curve(&with),
        })
    }
}

fn to_js<T: Serialize>(r: ddarr::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

/// JavaScript handle on a [`Session`].
#[wasm_bindgen]
pub struct Demo {
    inner: Session,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, JsError> {
        Session::new(seed as u64).map(|inner| Demo { inner }).map_err(|e| JsError::new(&e.to_string()))
    }

    /// Learned residuals as JSON.
    pub fn bank(&self) -> Result<String, JsError> {
        to_js(Ok(self.inner.bank()))
    }

    pub fn leak(&self, kind: &str, magnitude: f64) -> Result<String, JsError> {
        to_js(self.inner.leak(kind, magnitude))
    }

    pub fn monitor(&self, kind: &str, magnitude: f64, persistence: usize) -> Result<String, JsError> {
        to_js(self.inner.monitor(kind, magnitude, persistence))
    }

    pub fn roc(&self, magnitude: f64) -> Result<String, JsError> {
        to_js(self.inner.roc(magnitude))
    }
}

/// Fault kinds accepted by the demo.
#[wasm_bindgen]
pub fn fault_kinds() -> String {
    serde_json::to_string(&[FaultKind::Incipient, FaultKind::Abrupt]).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ddarr::tanksim::DEFAULT_LEAK;
    use std::sync::OnceLock;

    fn session() -> &'static Session {
        static S: OnceLock<Session> = OnceLock::new();
        S.get_or_init(|| Session::new(1).unwrap())
    }

    #[test]
    fn learns_both_demo_residuals() {
        let names: Vec<String> = session().bank().iter().map(|s| s.name()).collect();
        assert_eq!(names, ["r_y1", "r_int_u1"]);
    }

    #[test]
    fn leak_lowers_tank_one_after_onset() {
        let v = session().leak("abrupt", DEFAULT_LEAK).unwrap();
        let (_, y2) = v.traces.iter().find(|(n, _)| n == "y2").unwrap();
        assert!(y2.time.len() <= MAX_POINTS + 1);
        let last = y2.time.len() - 1;
        assert_eq!(y2.normal[0], y2.faulty[0]);
        assert!(y2.faulty[last] < y2.normal[last]);
    }

    #[test]
    fn integral_residual_alarms_after_onset() {
        let m = session().monitor("incipient", DEFAULT_LEAK, 3).unwrap();
        let r = m.residuals.iter().find(|r| r.residual == "r_int_u1").unwrap();
        assert!(r.delay.is_some());
        assert!(r.alarm_intervals.iter().all(|iv| iv[0] >= m.onset));
        assert!(m.residuals.iter().find(|r| r.residual == "r_y1").unwrap().alarm_intervals.is_empty());
    }

    #[test]
    fn roc_improves_with_residual() {
        let v = session().roc(DEFAULT_LEAK).unwrap();
        assert!(v.auc_with > v.auc_without);
        assert_eq!(v.with.first(), Some(&(0.0, 0.0)));
        assert_eq!(v.with.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn unknown_kind_is_rejected() {
        assert!(session().leak("gradual", 1e-4).is_err());
    }
}
