//! Least-squares and logistic regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::FeatureRef;

/// Relative singular-value cutoff for rank detection.
const RANK_TOL: f64 = 1e-10;

/// Affine model `y ≈ X·coefficients + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub feature_schema: Vec<FeatureRef>,
    /// R² on the fitting rows; absent for a constant target.
    pub train_score: Option<f64>,
    /// R² on held-out rows, when scored.
    pub valid_score: Option<f64>,
    /// Set when the design was rank deficient and a minimum-norm solution was used.
    #[serde(default)]
    pub rank_deficient: bool,
}

/// Ordinary least squares with an intercept.
///
/// Columns are centered, factored by Householder QR, and the small triangular
/// factor is solved through its SVD so that rank-deficient designs yield the
/// minimum-norm coefficients.
pub fn fit_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LinearModel> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::Schema(format!("{n} rows but {} targets", y.len())));
    }
    if n <= k + 1 {
        return Err(Error::InsufficientData { needed: k + 2, got: n });
    }
    let y_mean = y.mean();
    let x_means: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
    let mut coefficients = vec![0.0; k];
    let mut rank_deficient = false;
    if k > 0 {
        let mut a = x.clone();
        for (j, mut col) in a.column_iter_mut().enumerate() {
            col.add_scalar_mut(-x_means[j]);
        }
        let mut b = y.add_scalar(-y_mean);
        let qr = a.qr();
        qr.q_tr_mul(&mut b);
        let r = qr.r();
        let c = b.rows(0, k).into_owned();
        let svd = r.svd(true, true);
        let s_max = svd.singular_values.max();
        let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
        let ut_c = u.transpose() * c;
        let mut scaled = DVector::zeros(k);
        for i in 0..k {
            let s = svd.singular_values[i];
            if s > RANK_TOL * s_max && s > 0.0 {
                scaled[i] = ut_c[i] / s;
            } else {
                rank_deficient = true;
            }
        }
        let beta = v_t.transpose() * scaled;
        coefficients.copy_from_slice(beta.as_slice());
    }
    let intercept = y_mean - coefficients.iter().zip(&x_means).map(|(b, m)| b * m).sum::<f64>();
    let mut model = LinearModel {
        coefficients,
        intercept,
        feature_schema: Vec::new(),
        train_score: None,
        valid_score: None,
        rank_deficient,
    };
    let fitted = predict(&model, x)?;
    model.train_score = r2_score(y.as_slice(), fitted.as_slice()).ok();
    Ok(model)
}

/// Coefficient of determination `1 − SS_res/SS_tot`.
pub fn r2_score(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::Schema(format!("{} targets but {} predictions", y.len(), yhat.len())));
    }
    if y.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: y.len() });
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedScore);
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// `X·coefficients + intercept`.
pub fn predict(model: &LinearModel, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x.ncols() != model.coefficients.len() {
        return Err(Error::Schema(format!(
            "model expects {} features, got {}",
            model.coefficients.len(),
            x.ncols()
        )));
    }
    let mut out = DVector::from_element(x.nrows(), model.intercept);
    for (j, c) in model.coefficients.iter().enumerate() {
        out.axpy(*c, &x.column(j), 1.0);
    }
    Ok(out)
}

/// Damped-Newton settings for [`fit_logistic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub max_iters: usize,
    /// Stop when the infinity norm of the gradient falls below this.
    pub tolerance: f64,
    /// L2 penalty on the weights (not the intercept).
    pub l2: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { max_iters: 100, tolerance: 1e-8, l2: 1e-6 }
    }
}

/// Binary logistic classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Objective value after each accepted iterate, starting at the initial point.
    pub loss_history: Vec<f64>,
}

impl LogisticModel {
    /// Probability of the positive class for each row.
    pub fn predict_proba(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.weights.len() {
            return Err(Error::Schema(format!(
                "model expects {} features, got {}",
                self.weights.len(),
                x.ncols()
            )));
        }
        Ok(linear_scores(x, &self.weights, self.intercept).iter().map(|z| sigmoid(*z)).collect())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn linear_scores(x: &DMatrix<f64>, w: &[f64], b: f64) -> DVector<f64> {
    let mut z = DVector::from_element(x.nrows(), b);
    for (j, wj) in w.iter().enumerate() {
        z.axpy(*wj, &x.column(j), 1.0);
    }
    z
}

/// Mean negative log-likelihood plus `l2/2·‖w‖²`, and its gradient with the
/// intercept component last.
pub fn logistic_objective(
    x: &DMatrix<f64>,
    labels: &[bool],
    weights: &[f64],
    intercept: f64,
    l2: f64,
) -> (f64, Vec<f64>) {
    let n = x.nrows() as f64;
    let z = linear_scores(x, weights, intercept);
    let mut loss = 0.0;
    let mut resid = DVector::zeros(x.nrows());
    for (i, (zi, yi)) in z.iter().zip(labels).enumerate() {
        let y = if *yi { 1.0 } else { 0.0 };
        loss += softplus(*zi) - y * zi;
        resid[i] = sigmoid(*zi) - y;
    }
    loss /= n;
    loss += 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    let mut grad: Vec<f64> = (0..weights.len())
        .map(|j| x.column(j).dot(&resid) / n + l2 * weights[j])
        .collect();
    grad.push(resid.sum() / n);
    (loss, grad)
}

/// Fits a logistic classifier by damped Newton iterations.
pub fn fit_logistic(x: &DMatrix<f64>, labels: &[bool], config: &LogisticConfig) -> Result<LogisticModel> {
    let (n, k) = x.shape();
    if labels.len() != n {
        return Err(Error::Schema(format!("{n} rows but {} labels", labels.len())));
    }
    if !labels.iter().any(|l| *l) || labels.iter().all(|l| *l) {
        return Err(Error::DegenerateLabels);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite feature value".into()));
    }
    let mut w = vec![0.0; k];
    let prior = labels.iter().filter(|l| **l).count() as f64 / n as f64;
    let mut b = (prior / (1.0 - prior)).ln();
    let (mut loss, mut grad) = logistic_objective(x, labels, &w, b, config.l2);
    let mut history = vec![loss];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters {
        if grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) < config.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        // Hessian over [w, b].
        let z = linear_scores(x, &w, b);
        let mut h = DMatrix::zeros(k + 1, k + 1);
        let mut xi = DVector::zeros(k + 1);
        for i in 0..n {
            let p = sigmoid(z[i]);
            let s = p * (1.0 - p) / n as f64;
            if s == 0.0 {
                continue;
            }
            for j in 0..k {
                xi[j] = x[(i, j)];
            }
            xi[k] = 1.0;
            h.syger(s, &xi, &xi, 1.0);
        }
        h.fill_lower_triangle_with_upper_triangle();
        for j in 0..k {
            h[(j, j)] += config.l2;
        }
        h[(k, k)] += 1e-12;
        let g = DVector::from_column_slice(&grad);
        let dir = match h.clone().cholesky() {
            Some(ch) => -ch.solve(&g),
            None => -g.clone(),
        };
        let slope = g.dot(&dir);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let w_new: Vec<f64> = w.iter().zip(dir.iter()).map(|(wi, d)| wi + step * d).collect();
            let b_new = b + step * dir[k];
            let (l_new, g_new) = logistic_objective(x, labels, &w_new, b_new, config.l2);
            if l_new.is_finite() && l_new <= loss + 1e-4 * step * slope {
                w = w_new;
                b = b_new;
                loss = l_new;
                grad = g_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        history.push(loss);
    }
    if !converged && grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) < config.tolerance {
        converged = true;
    }
    Ok(LogisticModel { weights: w, intercept: b, converged, iterations, loss_history: history })
}
