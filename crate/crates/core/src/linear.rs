//! L2-regularized logistic regression by full-batch gradient descent.
//!
//! Minimizes `mean(logloss) + |beta|^2 / (2 C n)`, the per-sample form of
//! `|beta|^2 / 2 + C * sum(logloss)`. The intercept is not penalized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{sigmoid_scalar, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    /// Inverse regularization strength.
    pub c: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            c: 0.1,
            tolerance: 1e-6,
            max_iter: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid_scalar(self.decision(row))
    }
}

/// Largest eigenvalue of `X~^T X~ / n` (X~ = X with a ones column), by power
/// iteration. Used for the gradient-descent step size.
fn gram_spectral_bound(x: &Matrix) -> f64 {
    let (n, d) = (x.rows(), x.cols());
    let mut v = vec![1.0 / ((d + 1) as f64).sqrt(); d + 1];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut w = vec![0.0; d + 1];
        for i in 0..n {
            let row = x.row(i);
            let s = v[d] + row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
            for (wk, &xk) in w.iter_mut().zip(row) {
                *wk += s * xk;
            }
            w[d] += s;
        }
        for wk in &mut w {
            *wk /= n as f64;
        }
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm;
        v = w.into_iter().map(|a| a / norm).collect();
        if (next - lambda).abs() <= 1e-9 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // power iteration approaches from below; pad it
    lambda * 1.01
}

pub fn fit_logistic(x: &Matrix, y: &[u8], params: &LogisticParams) -> Result<LogisticModel> {
    let (n, d) = (x.rows(), x.cols());
    if n == 0 {
        return Err(Error::Empty("logistic regression training set"));
    }
    if params.c <= 0.0 {
        return Err(Error::Config("regularization C must be positive".into()));
    }
    let nf = n as f64;
    let penalty = 1.0 / (params.c * nf);
    let lipschitz = 0.25 * gram_spectral_bound(x) + penalty;
    let step = 1.0 / lipschitz;

    let mut beta = vec![0.0; d];
    let mut b0 = 0.0;
    let mut grad = vec![0.0; d];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut g0 = 0.0;
        for i in 0..n {
            let row = x.row(i);
            let z = b0 + row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
            let r = sigmoid_scalar(z) - f64::from(y[i]);
            for (gk, &xk) in grad.iter_mut().zip(row) {
                *gk += r * xk;
            }
            g0 += r;
        }
        g0 /= nf;
        for (gk, &bk) in grad.iter_mut().zip(&beta) {
            *gk = *gk / nf + penalty * bk;
        }
        let norm = (g0 * g0 + grad.iter().map(|g| g * g).sum::<f64>()).sqrt();
        if norm < params.tolerance {
            converged = true;
            break;
        }
        for (bk, gk) in beta.iter_mut().zip(&grad) {
            *bk -= step * gk;
        }
        b0 -= step * g0;
        iterations += 1;
    }
    Ok(LogisticModel {
        coef: beta,
        intercept: b0,
        iterations,
        converged,
    })
}
