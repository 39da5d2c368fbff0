//! Statistical selection of useful residuals: Welch Z-tests, detectability
//! and fault signature matrices.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::arrgen::ResidualSpec;
use crate::error::{Error, Result};
use crate::regress::predict;
use crate::timeseries::{build_design_matrix, Dataset};

/// Minimum sample count per group for the large-sample test.
pub const MIN_Z_SAMPLES: usize = 30;

/// Outcome of a two-sample Z-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub significant: bool,
    pub n_normal: usize,
    pub n_fault: usize,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Welch-form two-sample Z-test with a two-sided normal p-value.
pub fn z_test(r_normal: &[f64], r_fault: &[f64], alpha: f64) -> Result<ZTestResult> {
    for x in [r_normal, r_fault] {
        if x.len() < MIN_Z_SAMPLES {
            return Err(Error::InsufficientSamples { needed: MIN_Z_SAMPLES, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite residual sample".into()));
        }
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Validation(format!("alpha must be in (0,1), got {alpha}")));
    }
    let (mn, vn) = mean_var(r_normal);
    let (mf, vf) = mean_var(r_fault);
    let se = (vn / r_normal.len() as f64 + vf / r_fault.len() as f64).sqrt();
    let diff = mf - mn;
    let statistic = if diff == 0.0 {
        0.0
    } else if se == 0.0 {
        diff.signum() * f64::INFINITY
    } else {
        diff / se
    };
    let p_value = erfc(statistic.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    Ok(ZTestResult {
        statistic,
        p_value,
        significant: p_value < alpha,
        n_normal: r_normal.len(),
        n_fault: r_fault.len(),
    })
}

/// `target − model(loads)` for every row with a full lag window.
pub fn residual_signal(spec: &ResidualSpec, ds: &Dataset) -> Result<Vec<f64>> {
    let (x, y) = build_design_matrix(ds, &spec.loads, &spec.target).map_err(|e| match e {
        Error::MissingVariable(v) => Error::Schema(format!("dataset lacks `{v}` required by {}", spec.name())),
        other => other,
    })?;
    let yhat = predict(&spec.model, &x)?;
    Ok(y.iter().zip(yhat.iter()).map(|(a, b)| a - b).collect())
}

/// Significance level and optional Bonferroni correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub alpha: f64,
    pub bonferroni: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { alpha: 0.01, bonferroni: false }
    }
}

impl EvaluationConfig {
    /// Per-test level for a bank of `tests` residuals.
    pub fn effective_alpha(&self, tests: usize) -> f64 {
        if self.bonferroni && tests > 1 {
            self.alpha / tests as f64
        } else {
            self.alpha
        }
    }
}

/// One residual's test against one fault.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualTest {
    pub residual: String,
    pub test: ZTestResult,
}

/// Per-residual tests for a single fault.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detectability {
    pub tests: Vec<ResidualTest>,
    /// True when any residual is significant.
    pub detectable: bool,
}

/// Part of `normal` spanning the same time window as `faulty`, or all of
/// `normal` when it does not cover that window.
///
/// Residuals with slow or integrated content are not stationary, so the
/// normal reference is taken under the same operating conditions as the
/// faulty segment whenever possible.
pub fn reference_window(normal: &Dataset, faulty: &Dataset) -> Result<Dataset> {
    let tol = 1e-9 * normal.dt();
    let (start, end) = (faulty.t0(), faulty.time(faulty.len().saturating_sub(1)));
    let covers = start >= normal.t0() - tol
        && end <= normal.time(normal.len() - 1) + tol
        && (normal.dt() - faulty.dt()).abs() <= 1e-9 * normal.dt();
    if !covers {
        return Ok(normal.clone());
    }
    let i0 = normal.first_index_at_or_after(start);
    normal.slice(i0..(i0 + faulty.len()).min(normal.len()))
}

/// Tests every residual of `bank` on normal versus (post-onset) faulty data.
/// The normal reference is restricted by [`reference_window`].
pub fn detectability(bank: &[ResidualSpec], normal: &Dataset, faulty: &Dataset, alpha: f64) -> Result<Detectability> {
    let normal = reference_window(normal, faulty)?;
    let tests = bank
        .iter()
        .map(|spec| {
            let rn = residual_signal(spec, &normal)?;
            let rf = residual_signal(spec, faulty)?;
            Ok(ResidualTest { residual: spec.name(), test: z_test(&rn, &rf, alpha)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let detectable = tests.iter().any(|t| t.test.significant);
    Ok(Detectability { tests, detectable })
}

/// Whether two faults can be told apart by the bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairIsolability {
    pub fault_a: String,
    pub fault_b: String,
    pub isolable: bool,
    /// Residuals sensitive to exactly one of the two.
    pub distinguishing: Vec<String>,
}

/// Residual × fault sensitivity table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureMatrix {
    pub residuals: Vec<String>,
    pub faults: Vec<String>,
    /// `cells[i][j]`: residual `i` against fault `j`.
    pub cells: Vec<Vec<ZTestResult>>,
    pub alpha: f64,
    pub pairs: Vec<PairIsolability>,
}

impl SignatureMatrix {
    pub fn sensitive(&self, residual: usize, fault: usize) -> bool {
        self.cells[residual][fault].significant
    }

    /// Looks up a cell by names.
    pub fn entry(&self, residual: &str, fault: &str) -> Option<&ZTestResult> {
        let i = self.residuals.iter().position(|r| r == residual)?;
        let j = self.faults.iter().position(|f| f == fault)?;
        Some(&self.cells[i][j])
    }

    /// Column of 0/1 entries for a fault.
    pub fn signature(&self, fault: usize) -> Vec<bool> {
        (0..self.residuals.len()).map(|i| self.sensitive(i, fault)).collect()
    }

    /// CSV with residuals as rows and faults as columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("residual");
        for f in &self.faults {
            out.push(',');
            out.push_str(f);
        }
        out.push('\n');
        for (i, r) in self.residuals.iter().enumerate() {
            out.push_str(r);
            for j in 0..self.faults.len() {
                out.push_str(if self.sensitive(i, j) { ",1" } else { ",0" });
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the signature matrix of `bank` over the given (post-onset) fault
/// datasets, plus pairwise isolability. Each fault is compared against its
/// own [`reference_window`] of `normal`.
pub fn isolability_matrix(
    bank: &[ResidualSpec],
    faults: &[(String, Dataset)],
    normal: &Dataset,
    alpha: f64,
) -> Result<SignatureMatrix> {
    if faults.is_empty() {
        return Err(Error::Validation("at least one fault dataset is required".into()));
    }
    let mut cells = vec![Vec::with_capacity(faults.len()); bank.len()];
    for (_, ds) in faults {
        let reference = reference_window(normal, ds)?;
        for (i, spec) in bank.iter().enumerate() {
            let rn = residual_signal(spec, &reference)?;
            let rf = residual_signal(spec, ds)?;
            cells[i].push(z_test(&rn, &rf, alpha)?);
        }
    }
    let mut m = SignatureMatrix {
        residuals: bank.iter().map(ResidualSpec::name).collect(),
        faults: faults.iter().map(|(n, _)| n.clone()).collect(),
        cells,
        alpha,
        pairs: Vec::new(),
    };
    for a in 0..faults.len() {
        for b in a + 1..faults.len() {
            let distinguishing: Vec<String> = (0..bank.len())
                .filter(|i| m.sensitive(*i, a) != m.sensitive(*i, b))
                .map(|i| m.residuals[i].clone())
                .collect();
            m.pairs.push(PairIsolability {
                fault_a: m.faults[a].clone(),
                fault_b: m.faults[b].clone(),
                isolable: !distinguishing.is_empty(),
                distinguishing,
            });
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shifted(n: usize, mean: f64) -> Vec<f64> {
        // Deterministic ±1 pattern: sample std ≈ 1.
        (0..n).map(|i| mean + if i % 2 == 0 { 1.0 } else { -1.0 }).collect()
    }

    #[test]
    fn identical_samples() {
        let a = shifted(100, 0.0);
        let r = z_test(&a, &a, 0.01).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.significant);
    }

    #[test]
    fn known_statistic() {
        let a = shifted(100, 0.0);
        let b = shifted(100, 10.0);
        let (_, v) = mean_var(&a);
        let r = z_test(&a, &b, 0.01).unwrap();
        let expected = 10.0 / (2.0 * v / 100.0).sqrt();
        assert!((r.statistic - expected).abs() < 1e-9);
        assert!(r.significant);
    }

    #[test]
    fn zero_variance_cases() {
        let a = vec![1.0; 40];
        let r = z_test(&a, &a, 0.01).unwrap();
        assert_eq!((r.statistic, r.significant), (0.0, false));
        let r = z_test(&a, &vec![2.0; 40], 0.01).unwrap();
        assert!(r.statistic.is_infinite() && r.significant && r.p_value == 0.0);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            z_test(&[0.0; 29], &[0.0; 40], 0.01),
            Err(Error::InsufficientSamples { needed: 30, got: 29 })
        ));
    }

    #[test]
    fn reference_window_alignment() {
        let mk = |n: usize, t0: f64| {
            Dataset::new(vec!["a".into()], vec![(0..n).map(|i| i as f64).collect()], 0.5, t0).unwrap()
        };
        let normal = mk(100, 0.0);
        let w = reference_window(&normal, &mk(20, 10.0)).unwrap();
        assert_eq!((w.t0(), w.len()), (10.0, 20));
        assert_eq!(w.column("a").unwrap()[0], 20.0);
        assert_eq!(reference_window(&normal, &mk(20, 45.0)).unwrap().len(), 100);
    }

    #[test]
    fn bonferroni() {
        let c = EvaluationConfig { alpha: 0.01, bonferroni: true };
        assert_eq!(c.effective_alpha(4), 0.0025);
        assert_eq!(EvaluationConfig::default().effective_alpha(4), 0.01);
    }
}
