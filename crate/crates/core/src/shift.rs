//! Covariate-shift weights and the Gaussian KL divergence used to measure
//! shift intensity.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::learners::logistic::{clip_probability, fit_logistic, sigmoid};
use crate::tabular::Dataset;

/// Shift function `z` into `(0, 1)` together with an intensity `s`.
#[derive(Debug, Clone, Copy)]
pub struct ShiftSpec<Z> {
    pub z: Z,
    pub s: f64,
}

impl<Z: Fn(&[f64]) -> f64> ShiftSpec<Z> {
    pub fn new(z: Z, s: f64) -> Self {
        ShiftSpec { z, s }
    }

    /// `(z / (1 - z))^s`.
    pub fn weight(&self, x: &[f64]) -> Result<f64> {
        let z = (self.z)(x);
        if !(z > 0.0 && z < 1.0) {
            return Err(Error::InvalidData(format!("shift function value {z} outside (0, 1)")));
        }
        Ok((z / (1.0 - z)).powf(self.s))
    }
}

pub fn shift_weights<Z: Fn(&[f64]) -> f64>(x: ArrayView2<'_, f64>, spec: &ShiftSpec<Z>) -> Result<Array1<f64>> {
    if !(spec.s.is_finite() && spec.s >= 0.0) {
        return Err(Error::InvalidArgument(format!("shift intensity {} must be >= 0", spec.s)));
    }
    let mut out = Array1::zeros(x.nrows());
    for (i, row) in x.rows().into_iter().enumerate() {
        out[i] = spec.weight(&row.to_vec())?;
    }
    if out.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("shift weight".into()));
    }
    Ok(out)
}

/// Likelihood-ratio weights for `source` rows from a logistic domain
/// classifier: `p̂ = P(source | x)` and weight `(1 - p̂) / p̂`.
pub fn domain_weights(source: &Dataset, target: &Dataset, l2: f64) -> Result<Array1<f64>> {
    domain_weights_x(source.x(), target.x(), l2)
}

pub fn domain_weights_x(source: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>, l2: f64) -> Result<Array1<f64>> {
    if source.nrows() == 0 || target.nrows() == 0 {
        return Err(Error::InvalidData("domain weights need non-empty samples".into()));
    }
    if source.ncols() != target.ncols() {
        return Err(Error::InvalidData(format!(
            "covariate dimension mismatch: {} vs {}",
            source.ncols(),
            target.ncols()
        )));
    }
    let stacked = ndarray::concatenate(Axis(0), &[source, target])
        .map_err(|e| Error::InvalidData(e.to_string()))?;
    let label = Array1::from_iter((0..stacked.nrows()).map(|i| u8::from(i < source.nrows())));
    let model = fit_logistic(stacked.view(), label.view(), l2, 100, 1e-8)?;
    Ok(source
        .rows()
        .into_iter()
        .map(|r| {
            let p = clip_probability(sigmoid(model.linear_predictor(&r.to_vec())));
            (1.0 - p) / p
        })
        .collect())
}

/// Sample mean and covariance (denominator `n - 1`).
pub fn sample_moments(x: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = x.nrows();
    let d = x.ncols();
    if n <= d.max(1) {
        return Err(Error::InvalidData(format!("need more than {d} rows for a covariance, got {n}")));
    }
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let centred = &x - &mean;
    let cov = centred.t().dot(&centred) / (n as f64 - 1.0);
    Ok((mean, cov))
}

/// KL(N(mu0, sigma0) || N(mu1, sigma1)). Both covariances get
/// `1e-8 · tr(Σ)/d` added to the diagonal.
pub fn gaussian_kl_moments(
    mu0: &Array1<f64>,
    sigma0: &Array2<f64>,
    mu1: &Array1<f64>,
    sigma1: &Array2<f64>,
) -> Result<f64> {
    let d = mu0.len();
    let as_matrix = |s: &Array2<f64>| {
        let mut m = DMatrix::from_fn(d, d, |i, j| s[[i, j]]);
        let ridge = 1e-8 * m.trace() / d as f64;
        for i in 0..d {
            m[(i, i)] += ridge;
        }
        m
    };
    let s0 = as_matrix(sigma0);
    let s1 = as_matrix(sigma1);
    let c0 = s0.clone().cholesky().ok_or(Error::SingularCovariance)?;
    let c1 = s1.cholesky().ok_or(Error::SingularCovariance)?;
    let logdet = |l: &DMatrix<f64>| 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let trace = c1.solve(&s0).trace();
    let diff = DVector::from_fn(d, |i, _| mu1[i] - mu0[i]);
    let maha = diff.dot(&c1.solve(&diff));
    let kl = 0.5 * (trace + maha - d as f64 - logdet(&c0.l()) + logdet(&c1.l()));
    if !kl.is_finite() {
        return Err(Error::NonFinite("KL divergence".into()));
    }
    Ok(kl)
}

/// Plug-in KL(N⁰ || N¹) between Gaussian fits to two samples.
pub fn gaussian_kl(sample0: ArrayView2<'_, f64>, sample1: ArrayView2<'_, f64>) -> Result<f64> {
    if sample0.ncols() != sample1.ncols() {
        return Err(Error::InvalidData("samples differ in dimension".into()));
    }
    let (m0, s0) = sample_moments(sample0)?;
    let (m1, s1) = sample_moments(sample1)?;
    gaussian_kl_moments(&m0, &s0, &m1, &s1)
}
