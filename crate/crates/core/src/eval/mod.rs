//! Metrics and the repeated-experiment grid.

mod config;
mod grid;
mod results;

pub use config::{parse_toml, BoostSchedule, ExperimentConfig, Method};
pub use grid::{run_grid, run_repetition, CellKey};
pub use results::{aggregate, pivot, quantile, read_records, write_results, Aggregate, ExperimentResult, Record};

use ndarray::ArrayView1;

use crate::cate::CateModel;
use crate::error::{Error, Result};
use crate::tabular::Dataset;

/// `mean(τ) − mean(τ̂)`.
pub fn bias_of(tau: ArrayView1<'_, f64>, tau_hat: ArrayView1<'_, f64>) -> Result<f64> {
    check_pair(tau, tau_hat)?;
    Ok(tau.mean().expect("non-empty") - tau_hat.mean().expect("non-empty"))
}

/// `mean((τ − τ̂)²)`.
pub fn mse_of(tau: ArrayView1<'_, f64>, tau_hat: ArrayView1<'_, f64>) -> Result<f64> {
    check_pair(tau, tau_hat)?;
    let diff = &tau - &tau_hat;
    Ok(diff.dot(&diff) / tau.len() as f64)
}

fn check_pair(tau: ArrayView1<'_, f64>, tau_hat: ArrayView1<'_, f64>) -> Result<()> {
    if tau.is_empty() {
        return Err(Error::InvalidData("no test rows".into()));
    }
    if tau.len() != tau_hat.len() {
        return Err(Error::InvalidData(format!("{} true effects vs {} predictions", tau.len(), tau_hat.len())));
    }
    Ok(())
}

/// ATE bias of `model` on a test set carrying true effects.
pub fn ate_bias(model: &CateModel, test: &Dataset) -> Result<f64> {
    bias_of(test.truth_tau()?, model.predict_tau(test.x()).view())
}

/// ATE bias against a known scalar effect.
pub fn ate_bias_scalar(model: &CateModel, test: &Dataset, ate: f64) -> Result<f64> {
    if test.n() == 0 {
        return Err(Error::InvalidData("no test rows".into()));
    }
    Ok(ate - model.predict_tau(test.x()).mean().expect("non-empty"))
}

pub fn cate_mse(model: &CateModel, test: &Dataset) -> Result<f64> {
    mse_of(test.truth_tau()?, model.predict_tau(test.x()).view())
}
