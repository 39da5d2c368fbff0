//! Declarative run configuration.

use std::path::{Path, PathBuf};

use ddarr::arrgen::{SearchConfig, SearchMode};
use ddarr::detect::DEFAULT_PERSISTENCE;
use ddarr::evaluate::EvaluationConfig;
use ddarr::regress::LogisticConfig;
use ddarr::tanksim::{FaultKind, FaultScenario, TankParams, MEASURED};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub mode: SearchMode,
    pub search: SearchConfig,
    pub evaluation: EvaluationConfig,
    pub detection: DetectionConfig,
    pub simulator: SimulatorConfig,
    pub data: DataConfig,
    pub roc: RocConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out: PathBuf::from("out"),
            mode: SearchMode::Forward,
            search: SearchConfig::default(),
            evaluation: EvaluationConfig::default(),
            detection: DetectionConfig::default(),
            simulator: SimulatorConfig::default(),
            data: DataConfig::default(),
            roc: RocConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    /// Consecutive out-of-band samples required for an alarm.
    pub persistence: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { persistence: DEFAULT_PERSISTENCE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorConfig {
    pub params: TankParams,
    pub scenarios: Vec<FaultScenario>,
    /// Also write the unmeasured states of every run.
    pub keep_states: bool,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            params: TankParams::default(),
            scenarios: vec![FaultScenario::incipient_tank1(), FaultScenario::abrupt_tank1()],
            keep_states: false,
        }
    }
}

/// A faulty dataset on disk. Samples at or after `onset` are faulty; without
/// an onset the whole record is treated as the faulty segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultData {
    pub name: String,
    pub path: PathBuf,
    #[serde(default)]
    pub onset: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Normal-operation dataset; defaults to `<out>/normal.csv`.
    pub normal: Option<PathBuf>,
    /// Residual bank; defaults to `<out>/bank.json`.
    pub bank: Option<PathBuf>,
    /// Faulty datasets; default to one `<out>/<name>.csv` per simulator scenario.
    pub faults: Vec<FaultData>,
    /// Append `int_<name>` for every column that is not already an integral.
    pub integrals: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { normal: None, bank: None, faults: Vec::new(), integrals: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RocConfig {
    /// Target of the residual appended to the sensor features.
    pub residual: String,
    /// Fault dataset used for training.
    pub train: String,
    /// Fault dataset used for testing.
    pub test: String,
    pub sensors: Vec<String>,
    pub logistic: LogisticConfig,
}

impl Default for RocConfig {
    fn default() -> Self {
        Self {
            residual: "int_u1".into(),
            train: "abrupt".into(),
            test: "incipient".into(),
            sensors: MEASURED.iter().map(|s| s.to_string()).collect(),
            logistic: LogisticConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        self.search.validate()?;
        let alpha = self.evaluation.alpha;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(CliError::Validation(format!("evaluation.alpha must be in (0,1), got {alpha}")));
        }
        if self.detection.persistence == 0 {
            return Err(CliError::Validation("detection.persistence must be ≥ 1".into()));
        }
        self.simulator.params.validate()?;
        let mut names = std::collections::BTreeSet::new();
        for s in &self.simulator.scenarios {
            s.validate(&self.simulator.params)?;
            if s.name == "normal" || !names.insert(s.name.as_str()) {
                return Err(CliError::Validation(format!("duplicate or reserved scenario name `{}`", s.name)));
            }
            if s.name.is_empty() || s.name.contains(['/', '\\']) {
                return Err(CliError::Validation(format!("scenario name `{}` is not a valid file stem", s.name)));
            }
        }
        Ok(())
    }

    pub fn normal_path(&self) -> PathBuf {
        self.data.normal.clone().unwrap_or_else(|| self.out.join("normal.csv"))
    }

    pub fn bank_path(&self) -> PathBuf {
        self.data.bank.clone().unwrap_or_else(|| self.out.join("bank.json"))
    }

    pub fn fault_data(&self) -> Vec<FaultData> {
        if !self.data.faults.is_empty() {
            return self.data.faults.clone();
        }
        self.simulator
            .scenarios
            .iter()
            .map(|s| FaultData { name: s.name.clone(), path: self.out.join(format!("{}.csv", s.name)), onset: s.onset_time() })
            .collect()
    }

    /// Scenario used to label a detection run over `data`.
    pub fn scenario_for(&self, data: &FaultData) -> FaultScenario {
        if let Some(s) = self.simulator.scenarios.iter().find(|s| s.name == data.name && s.onset_time() == data.onset) {
            return s.clone();
        }
        FaultScenario {
            name: data.name.clone(),
            kind: if data.onset.is_some() { FaultKind::Abrupt } else { FaultKind::None },
            onset: data.onset.unwrap_or(0.0),
            ..FaultScenario::none()
        }
    }
}
