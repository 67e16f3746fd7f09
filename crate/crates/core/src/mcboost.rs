//! Multi-accuracy auditing and boosting.
//!
//! [`boost`] rescales outcomes to `[0, 1]`, then repeatedly fits an auditor to
//! the residuals `y - p(x)` on a calibration set and measures
//! `Δ = mean(c(x) (y - p(x)))` on a validation set. While `|Δ| > α` the
//! prediction is updated multiplicatively and clipped back into `[0, 1]`.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{LearnerSpec, Predictor};
use crate::tabular::{Dataset, OutcomeScaler};

/// Calibration sets smaller than this are not boosted.
pub const MIN_CALIBRATION_ROWS: usize = 5;

/// Test-function family searched by the auditor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AuditorClass {
    Ridge {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    Tree {
        #[serde(default = "default_depth")]
        max_depth: usize,
        #[serde(default = "default_node")]
        min_node_size: usize,
    },
}

fn default_lambda() -> f64 {
    1.0
}
fn default_depth() -> usize {
    3
}
fn default_node() -> usize {
    20
}

impl Default for AuditorClass {
    fn default() -> Self {
        AuditorClass::Ridge { lambda: 1.0 }
    }
}

impl AuditorClass {
    pub fn ridge() -> Self {
        AuditorClass::Ridge { lambda: 1.0 }
    }

    pub fn tree() -> Self {
        AuditorClass::Tree {
            max_depth: 3,
            min_node_size: 20,
        }
    }

    pub fn learner(&self) -> LearnerSpec {
        match *self {
            AuditorClass::Ridge { lambda } => LearnerSpec::Ridge {
                lambda,
                standardize: true,
            },
            AuditorClass::Tree {
                max_depth,
                min_node_size,
            } => LearnerSpec::Tree {
                max_depth,
                min_node_size,
            },
        }
    }

    pub fn fit(&self, x: ArrayView2<'_, f64>, residual: ArrayView1<'_, f64>) -> Result<Predictor> {
        self.learner().fit(x, residual, None, 0)
    }
}

/// Form of the multiplicative update `p <- clip(p * exp(step * c(x)))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// `step = η · sign(Δ)`.
    #[default]
    SignedStep,
    /// `step = η · Δ`.
    DeltaScaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostConfig {
    pub alpha: f64,
    pub eta: f64,
    pub max_iter: usize,
    pub auditor: AuditorClass,
    pub update: UpdateRule,
    /// Audit separately within this many equal-width prediction bins.
    /// `None` (or 1) is plain multi-accuracy.
    pub buckets: Option<usize>,
    /// Fixed scaling bounds; by default the range of outcomes and initial
    /// predictions over calibration and validation rows.
    pub scaler: Option<OutcomeScaler>,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            alpha: 1e-6,
            eta: 0.5,
            max_iter: 5,
            auditor: AuditorClass::default(),
            update: UpdateRule::default(),
            buckets: None,
            scaler: None,
        }
    }
}

impl BoostConfig {
    pub fn with_auditor(mut self, auditor: AuditorClass) -> Self {
        self.auditor = auditor;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::InvalidArgument(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.buckets == Some(0) {
            return Err(Error::InvalidArgument("buckets must be >= 1".into()));
        }
        if let Some(s) = &self.scaler {
            if !(s.lo.is_finite() && s.hi.is_finite() && s.hi > s.lo) {
                return Err(Error::InvalidArgument(format!("scaler bounds [{}, {}]", s.lo, s.hi)));
            }
        }
        Ok(())
    }

    fn bins(&self) -> usize {
        self.buckets.unwrap_or(1).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub c: Predictor,
    pub delta: f64,
}

/// One audited function inside a boosting step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinAudit {
    pub bin: usize,
    pub auditor: Predictor,
    pub delta: f64,
}

/// Updates applied in one iteration. Only bins whose `|Δ|` exceeded α are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub bins: usize,
    pub audits: Vec<BinAudit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StopStatus {
    /// The audit at this iteration (0-based) passed `|Δ| <= α`.
    Converged { iteration: usize, delta: f64 },
    /// `max_iter` updates were applied without a passing audit.
    MaxIter,
    /// Boosting was not attempted.
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedPredictor {
    pub initial: Predictor,
    pub scaler: OutcomeScaler,
    pub eta: f64,
    pub update: UpdateRule,
    pub steps: Vec<Step>,
    pub status: StopStatus,
}

impl BoostedPredictor {
    pub(crate) fn unchanged(initial: Predictor, scaler: OutcomeScaler, config: &BoostConfig, status: StopStatus) -> Self {
        BoostedPredictor {
            initial,
            scaler,
            eta: config.eta,
            update: config.update,
            steps: Vec::new(),
            status,
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let p0 = self.initial.predict_row(x);
        if self.steps.is_empty() {
            return p0;
        }
        let mut p = self.scaler.transform(p0);
        for step in &self.steps {
            p = apply_step(step, p, x, self.eta, self.update);
        }
        self.scaler.inverse(p)
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        x.rows()
            .into_iter()
            .map(|r| self.predict_row(&r.to_vec()))
            .collect()
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }
}

fn bin_of(p: f64, bins: usize) -> usize {
    ((p * bins as f64).floor() as usize).min(bins - 1)
}

fn apply_step(step: &Step, p: f64, x: &[f64], eta: f64, rule: UpdateRule) -> f64 {
    let bin = bin_of(p, step.bins);
    match step.audits.iter().find(|a| a.bin == bin) {
        Some(a) => {
            let scale = match rule {
                UpdateRule::SignedStep => eta * a.delta.signum(),
                UpdateRule::DeltaScaled => eta * a.delta,
            };
            (p * (scale * a.auditor.predict_row(x)).exp()).clamp(0.0, 1.0)
        }
        None => p,
    }
}

fn residuals(y: ArrayView1<'_, f64>, p: &Array1<f64>) -> Array1<f64> {
    &y - p
}

/// Fit `auditor` to the residuals of `p` on `calib` and measure the mean
/// residual correlation on `valid`. Both datasets are used in whatever
/// outcome scale they come in.
pub fn audit(p: &Predictor, calib: &Dataset, valid: &Dataset, auditor: &AuditorClass) -> Result<AuditResult> {
    if calib.n() == 0 || valid.n() == 0 {
        return Err(Error::InvalidData("audit needs non-empty calibration and validation sets".into()));
    }
    let rc = residuals(calib.y(), &p.predict(calib.x()));
    let rv = residuals(valid.y(), &p.predict(valid.x()));
    let c = auditor.fit(calib.x(), rc.view())?;
    let delta = mean_product(&c.predict(valid.x()), &rv);
    if !delta.is_finite() {
        return Err(Error::NonFinite("audit delta".into()));
    }
    Ok(AuditResult { c, delta })
}

/// `|mean(c(x) (y - p(x)))|` for the auditor fitted to `p`'s residuals on
/// `data` itself.
pub fn multiaccuracy_error(p: &Predictor, data: &Dataset, auditor: &AuditorClass) -> Result<f64> {
    Ok(audit(p, data, data, auditor)?.delta.abs())
}

fn mean_product(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum::<f64>() / a.len() as f64
}

/// Post-process `p0` until it passes `(auditor, α)` auditing on `valid` or
/// `max_iter` updates have been applied.
pub fn boost(p0: Predictor, calib: &Dataset, valid: &Dataset, config: &BoostConfig) -> Result<BoostedPredictor> {
    config.validate()?;
    if valid.n() == 0 {
        return Err(Error::InvalidData("boosting needs a non-empty validation set".into()));
    }
    let p_calib0 = p0.predict(calib.x());
    let p_valid0 = p0.predict(valid.x());
    let scaler = match config.scaler {
        Some(s) => s,
        None => OutcomeScaler::fit(
            calib
                .y()
                .iter()
                .chain(valid.y().iter())
                .chain(p_calib0.iter())
                .chain(p_valid0.iter()),
        )?,
    };
    if calib.n() < MIN_CALIBRATION_ROWS {
        log::warn!(
            "calibration set has {} rows (< {MIN_CALIBRATION_ROWS}); returning the initial predictor",
            calib.n()
        );
        let reason = format!("calibration set has {} rows", calib.n());
        return Ok(BoostedPredictor::unchanged(p0, scaler, config, StopStatus::Skipped { reason }));
    }

    let yc = calib.y().mapv(|v| scaler.transform(v));
    let yv = valid.y().mapv(|v| scaler.transform(v));
    let mut pc = p_calib0.mapv(|v| scaler.transform(v));
    let mut pv = p_valid0.mapv(|v| scaler.transform(v));
    let bins = config.bins();
    let mut steps = Vec::new();
    let mut status = StopStatus::MaxIter;

    for iteration in 0..config.max_iter {
        let rc = &yc - &pc;
        let rv = &yv - &pv;
        let mut audits = Vec::new();
        let mut worst = 0.0f64;
        let mut worst_delta = 0.0;
        for bin in 0..bins {
            let rows_c: Vec<usize> = (0..pc.len()).filter(|&i| bin_of(pc[i], bins) == bin).collect();
            if rows_c.len() < 2 && bins > 1 {
                continue;
            }
            let xc = calib.x().select(ndarray::Axis(0), &rows_c);
            let r = Array1::from_iter(rows_c.iter().map(|&i| rc[i]));
            let c = config.auditor.fit(xc.view(), r.view())?;
            let mut sum = 0.0;
            for i in 0..pv.len() {
                if bin_of(pv[i], bins) == bin {
                    sum += c.predict_row(&valid.x().row(i).to_vec()) * rv[i];
                }
            }
            let delta = sum / pv.len() as f64;
            if !delta.is_finite() {
                return Err(Error::NonFinite(format!("miscalibration at boosting iteration {iteration}")));
            }
            if delta.abs() > worst {
                worst = delta.abs();
                worst_delta = delta;
            }
            if delta.abs() > config.alpha {
                audits.push(BinAudit { bin, auditor: c, delta });
            }
        }
        if audits.is_empty() {
            status = StopStatus::Converged {
                iteration,
                delta: worst_delta,
            };
            break;
        }
        let step = Step { bins, audits };
        for (i, row) in calib.x().rows().into_iter().enumerate() {
            pc[i] = apply_step(&step, pc[i], &row.to_vec(), config.eta, config.update);
        }
        for (i, row) in valid.x().rows().into_iter().enumerate() {
            pv[i] = apply_step(&step, pv[i], &row.to_vec(), config.eta, config.update);
        }
        if pc.iter().chain(pv.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("prediction at boosting iteration {iteration}")));
        }
        log::debug!("boost iteration {iteration}: max |delta| {worst:.3e}");
        steps.push(step);
    }

    Ok(BoostedPredictor {
        initial: p0,
        scaler,
        eta: config.eta,
        update: config.update,
        steps,
        status,
    })
}
