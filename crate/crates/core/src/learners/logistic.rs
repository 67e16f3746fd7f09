use nalgebra::{DMatrix, DVector};
use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability floor and ceiling applied at prediction time.
pub const PROB_CLIP: f64 = 1e-6;

/// Linear predictor beyond which an unpenalised fit is treated as separated.
const SEPARATION_GUARD: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn clip_probability(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

impl LogisticModel {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }

    /// `P(t = 1 | x)` clipped to `[1e-6, 1 - 1e-6]`.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        clip_probability(sigmoid(self.linear_predictor(x)))
    }
}

/// L2-penalised logistic regression by iteratively reweighted least squares.
/// The intercept is not penalised. Stops when the largest Newton step is below
/// `tol` or after `max_iter` steps.
pub fn fit_logistic(
    x: ArrayView2<'_, f64>,
    t: ArrayView1<'_, u8>,
    l2: f64,
    max_iter: usize,
    tol: f64,
) -> Result<LogisticModel> {
    let n = x.nrows();
    let d = x.ncols();
    if n == 0 || t.len() != n {
        return Err(Error::InvalidData(format!(
            "logistic needs matching non-empty inputs (x has {n} rows, t has {})",
            t.len()
        )));
    }
    if !(l2.is_finite() && l2 >= 0.0) {
        return Err(Error::InvalidArgument(format!("logistic l2 {l2}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logistic covariates".into()));
    }
    let positives = t.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == n {
        if l2 == 0.0 {
            return Err(Error::InvalidData(
                "logistic regression needs both classes when l2 = 0".into(),
            ));
        }
        let p = clip_probability(positives as f64 / n as f64);
        return Ok(LogisticModel {
            intercept: logit(p),
            coefficients: vec![0.0; d],
        });
    }

    let k = d + 1;
    let mut beta = DVector::<f64>::zeros(k);
    beta[0] = logit(positives as f64 / n as f64);
    let row = |i: usize, j: usize| if j == 0 { 1.0 } else { x[[i, j - 1]] };
    for _ in 0..max_iter.max(1) {
        let mut hess = DMatrix::<f64>::zeros(k, k);
        let mut grad = DVector::<f64>::zeros(k);
        let mut max_eta = 0.0f64;
        for i in 0..n {
            let eta: f64 = (0..k).map(|j| row(i, j) * beta[j]).sum();
            max_eta = max_eta.max(eta.abs());
            let p = sigmoid(eta);
            let w = (p * (1.0 - p)).max(1e-12);
            let r = t[i] as f64 - p;
            for a in 0..k {
                let xa = row(i, a);
                grad[a] += xa * r;
                for b in 0..=a {
                    hess[(a, b)] += w * xa * row(i, b);
                }
            }
        }
        if l2 == 0.0 && max_eta > SEPARATION_GUARD {
            return Err(Error::DivergingCoefficients);
        }
        for a in 0..k {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
            if a > 0 {
                hess[(a, a)] += l2;
                grad[a] -= l2 * beta[a];
            }
        }
        let step = match hess.cholesky() {
            Some(c) => c.solve(&grad),
            None if l2 == 0.0 => return Err(Error::DivergingCoefficients),
            None => return Err(Error::NonFinite("logistic Hessian".into())),
        };
        beta += &step;
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergingCoefficients);
        }
        if step.amax() < tol {
            break;
        }
    }
    Ok(LogisticModel {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
    })
}
