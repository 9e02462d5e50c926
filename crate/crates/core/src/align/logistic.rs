//! L2-regularized logistic regression on internally standardized inputs,
//! fitted by damped Newton iterations.
//!
//! Objective (bias unpenalized, `z` the standardized inputs):
//! `L(w, b) = mean(softplus(eta) - y * eta) + l2 / (2n) * |w|^2`, `eta = b + w.z`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{AlignError, FeatureMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub l2: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: 1.0,
            max_iters: 100,
            tol: 1e-10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    /// Training column means.
    pub means: Vec<f64>,
    /// Training column standard deviations (population); zero for constant columns.
    pub sds: Vec<f64>,
    /// Weights on the standardized inputs.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn scale(sd: f64) -> f64 {
    if sd > 0.0 {
        sd
    } else {
        1.0
    }
}

impl LogisticParams {
    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(v, (m, s))| (v - m) / scale(*s))
            .collect()
    }

    pub fn raw_score(&self, x: &[f64]) -> f64 {
        let mut eta = self.bias;
        for (j, v) in x.iter().enumerate() {
            eta += self.weights[j] * ((v - self.means[j]) / scale(self.sds[j]));
        }
        eta
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.raw_score(x))
    }

    /// Regularized objective on `matrix`.
    pub fn loss(&self, matrix: &FeatureMatrix, l2: f64) -> f64 {
        let n = matrix.len() as f64;
        let nll: f64 = matrix
            .rows
            .iter()
            .map(|r| {
                let eta = self.raw_score(&r.x);
                softplus(eta) - r.y.as_u8() as f64 * eta
            })
            .sum();
        nll / n + l2 / (2.0 * n) * self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

pub(crate) fn column_stats(matrix: &FeatureMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = matrix.len() as f64;
    let d = matrix.dim();
    let mut means = vec![0.0; d];
    for r in &matrix.rows {
        for (m, v) in means.iter_mut().zip(&r.x) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut sds = vec![0.0; d];
    for r in &matrix.rows {
        for j in 0..d {
            sds[j] += (r.x[j] - means[j]).powi(2);
        }
    }
    sds.iter_mut().for_each(|s| *s = (*s / n).sqrt());
    (means, sds)
}

pub fn fit_logistic(matrix: &FeatureMatrix, config: &LogisticConfig) -> Result<LogisticParams, AlignError> {
    matrix.require_both_classes()?;
    if !(config.l2 >= 0.0) {
        return Err(AlignError::Precondition("l2 must be non-negative".into()));
    }
    let n = matrix.len();
    let nf = n as f64;
    let d = matrix.dim();
    let (means, sds) = column_stats(matrix);
    let mut params = LogisticParams {
        means,
        sds,
        weights: vec![0.0; d],
        bias: 0.0,
        iterations: 0,
        grad_norm: f64::INFINITY,
    };
    // Design matrix with a leading column of ones.
    let z: Vec<Vec<f64>> = matrix
        .rows
        .iter()
        .map(|r| std::iter::once(1.0).chain(params.standardize(&r.x)).collect())
        .collect();
    let y: Vec<f64> = matrix.rows.iter().map(|r| r.y.as_u8() as f64).collect();
    let mut theta = DVector::<f64>::zeros(d + 1);
    let objective = |theta: &DVector<f64>| -> f64 {
        let mut s = 0.0;
        for (zi, yi) in z.iter().zip(&y) {
            let eta: f64 = zi.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
            s += softplus(eta) - yi * eta;
        }
        s / nf + config.l2 / (2.0 * nf) * theta.iter().skip(1).map(|w| w * w).sum::<f64>()
    };
    let mut current = objective(&theta);
    for iter in 0..=config.max_iters {
        let mut grad = DVector::<f64>::zeros(d + 1);
        let mut hess = DMatrix::<f64>::zeros(d + 1, d + 1);
        for (zi, yi) in z.iter().zip(&y) {
            let eta: f64 = zi.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
            let p = sigmoid(eta);
            let w = p * (1.0 - p);
            for a in 0..=d {
                grad[a] += (p - yi) * zi[a];
                for b in 0..=a {
                    hess[(a, b)] += w * zi[a] * zi[b];
                }
            }
        }
        for a in 0..=d {
            grad[a] /= nf;
            for b in 0..=a {
                hess[(a, b)] /= nf;
                hess[(b, a)] = hess[(a, b)];
            }
        }
        for a in 1..=d {
            grad[a] += config.l2 / nf * theta[a];
            hess[(a, a)] += config.l2 / nf;
        }
        params.grad_norm = grad.norm();
        params.iterations = iter;
        if params.grad_norm <= config.tol || iter == config.max_iters {
            break;
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => {
                // Singular curvature (e.g. separable data without penalty).
                let ridge = hess + DMatrix::identity(d + 1, d + 1) * 1e-8;
                ridge.cholesky().map(|ch| ch.solve(&grad)).unwrap_or_else(|| grad.clone())
            }
        };
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let candidate = &theta - &step * t;
            let value = objective(&candidate);
            if value <= current {
                theta = candidate;
                current = value;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    params.bias = theta[0];
    params.weights = theta.iter().skip(1).copied().collect();
    Ok(params)
}
