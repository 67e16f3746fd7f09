use nalgebra::{DMatrix, DVector};
use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine predictor `intercept + x·coefficients`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
}

impl LinearModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }
}

/// Column centring and scaling used by [`fit_ridge`].
#[derive(Debug, Clone)]
pub(crate) struct Standardization {
    pub means: Vec<f64>,
    /// `0.0` marks a constant column that is left out of the fit.
    pub scales: Vec<f64>,
}

impl Standardization {
    pub fn fit(x: ArrayView2<'_, f64>, w: &[f64], standardize: bool) -> Self {
        let total: f64 = w.iter().sum();
        let d = x.ncols();
        let mut means = vec![0.0; d];
        let mut scales = vec![0.0; d];
        for j in 0..d {
            let col = x.column(j);
            let m = col.iter().zip(w).map(|(v, wi)| v * wi).sum::<f64>() / total;
            let var = col
                .iter()
                .zip(w)
                .map(|(v, wi)| wi * (v - m) * (v - m))
                .sum::<f64>()
                / total;
            means[j] = m;
            let sd = var.sqrt();
            scales[j] = if sd > 1e-12 * (1.0 + m.abs()) {
                if standardize {
                    sd
                } else {
                    1.0
                }
            } else {
                0.0
            };
        }
        Standardization { means, scales }
    }

    pub fn active(&self) -> Vec<usize> {
        (0..self.scales.len()).filter(|&j| self.scales[j] > 0.0).collect()
    }

    /// Transformed design restricted to active columns.
    pub fn design(&self, x: ArrayView2<'_, f64>, active: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), active.len(), |i, k| {
            let j = active[k];
            (x[[i, j]] - self.means[j]) / self.scales[j]
        })
    }
}

/// Weighted ridge regression with an unpenalised intercept.
///
/// Minimises `Σ wᵢ (yᵢ − b − zᵢ·γ)² + λ‖γ‖²` where `z` are the centred
/// (and, when `standardize` is set, unit-variance) features, then maps `γ`
/// back to the raw feature scale. Constant columns get a zero coefficient.
pub fn fit_ridge(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    lambda: f64,
    weights: Option<ArrayView1<'_, f64>>,
    standardize: bool,
) -> Result<LinearModel> {
    let n = x.nrows();
    if n == 0 || y.len() != n {
        return Err(Error::InvalidData(format!(
            "ridge needs matching non-empty inputs (x has {n} rows, y has {})",
            y.len()
        )));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("ridge lambda {lambda}")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge target".into()));
    }
    let w: Vec<f64> = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; n],
    };
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidData("ridge weights sum to zero".into()));
    }
    let y_mean = y.iter().zip(&w).map(|(v, wi)| v * wi).sum::<f64>() / total;
    let st = Standardization::fit(x, &w, standardize);
    let active = st.active();
    let mut coefficients = vec![0.0; x.ncols()];
    if !active.is_empty() {
        let z = st.design(x, &active);
        let k = active.len();
        let mut gram = DMatrix::<f64>::zeros(k, k);
        let mut rhs = DVector::<f64>::zeros(k);
        for i in 0..n {
            let wi = w[i];
            if wi == 0.0 {
                continue;
            }
            let r = y[i] - y_mean;
            for a in 0..k {
                let za = z[(i, a)] * wi;
                rhs[a] += za * r;
                for b in 0..=a {
                    gram[(a, b)] += za * z[(i, b)];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                gram[(b, a)] = gram[(a, b)];
            }
            gram[(a, a)] += lambda;
        }
        let gamma = solve_spd(gram, &rhs, lambda == 0.0)?;
        for (idx, &j) in active.iter().enumerate() {
            coefficients[j] = gamma[idx] / st.scales[j];
        }
    }
    let intercept = y_mean
        - coefficients
            .iter()
            .zip(&st.means)
            .map(|(b, m)| b * m)
            .sum::<f64>();
    if !intercept.is_finite() || coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("ridge coefficients".into()));
    }
    Ok(LinearModel {
        intercept,
        coefficients,
        lambda,
    })
}

/// Cholesky solve; with `check_rank`, a pivot ratio below 1e-12 counts as
/// rank deficiency.
pub(crate) fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>, check_rank: bool) -> Result<DVector<f64>> {
    let chol = a.cholesky().ok_or(Error::RankDeficient)?;
    if check_rank {
        let diag = chol.l_dirty().diagonal();
        let max = diag.iter().cloned().fold(0.0f64, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) || (min / max).powi(2) < 1e-12 {
            return Err(Error::RankDeficient);
        }
    }
    Ok(chol.solve(b))
}
