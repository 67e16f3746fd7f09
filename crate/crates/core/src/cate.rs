//! CATE meta-learners, their multi-accurate variants and ATE estimators.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::logistic::clip_probability;
use crate::learners::{LearnerSpec, Predictor, PropensitySpec};
use crate::mcboost::{boost, BoostConfig, BoostedPredictor, StopStatus};
use crate::rng::derive_seed;
use crate::tabular::{split, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum CateVariant {
    /// `τ(x) = μ1(x) − μ0(x)`.
    TwoModels { mu0: Predictor, mu1: Predictor },
    /// Direct regression of a pseudo-outcome.
    PseudoRegression { tau: Predictor },
    /// One regression on `(x, t)` with the treatment as the last column.
    Joint { f: Predictor },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateModel {
    pub method: String,
    pub variant: CateVariant,
    /// Settings the model was fitted with.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl CateModel {
    fn new(method: &str, variant: CateVariant, config: serde_json::Value) -> Self {
        CateModel {
            method: method.to_string(),
            variant,
            config,
        }
    }

    pub fn tau_row(&self, x: &[f64]) -> f64 {
        match &self.variant {
            CateVariant::TwoModels { mu0, mu1 } => mu1.predict_row(x) - mu0.predict_row(x),
            CateVariant::PseudoRegression { tau } => tau.predict_row(x),
            CateVariant::Joint { f } => {
                let mut row = x.to_vec();
                row.push(1.0);
                let treated = f.predict_row(&row);
                *row.last_mut().expect("non-empty") = 0.0;
                treated - f.predict_row(&row)
            }
        }
    }

    pub fn predict_tau(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        x.rows().into_iter().map(|r| self.tau_row(&r.to_vec())).collect()
    }

    /// Outcome models for two-model variants.
    pub fn outcome_models(&self) -> Option<(&Predictor, &Predictor)> {
        match &self.variant {
            CateVariant::TwoModels { mu0, mu1 } => Some((mu0, mu1)),
            _ => None,
        }
    }

    /// Boosting outcomes of the post-processed parts, if any.
    pub fn boost_statuses(&self) -> Vec<&StopStatus> {
        fn status(p: &Predictor) -> Option<&StopStatus> {
            match p {
                Predictor::Boosted(b) => Some(&b.status),
                _ => None,
            }
        }
        match &self.variant {
            CateVariant::TwoModels { mu0, mu1 } => [status(mu0), status(mu1)].into_iter().flatten().collect(),
            CateVariant::PseudoRegression { tau } => status(tau).into_iter().collect(),
            CateVariant::Joint { f } => status(f).into_iter().collect(),
        }
    }
}

/// Propensity and outcome models. `e` is clipped to `[1e-6, 1 − 1e-6]` on use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisancePair {
    pub e: Predictor,
    pub mu0: Predictor,
    pub mu1: Predictor,
}

impl NuisancePair {
    pub fn propensity(&self, x: &[f64]) -> f64 {
        clip_probability(self.e.predict_row(x))
    }

    pub fn mu(&self, x: &[f64], t: u8) -> f64 {
        if t == 1 {
            self.mu1.predict_row(x)
        } else {
            self.mu0.predict_row(x)
        }
    }
}

fn snapshot<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).unwrap_or(serde_json::Value::Null)
}

fn fit_arm(data: &Dataset, arm: u8, base: &LearnerSpec, seed: u64) -> Result<Predictor> {
    let d = data.arm(arm)?;
    base.fit(d.x(), d.y(), d.weights(), derive_seed(seed, &[arm as u64]))
}

/// Separate outcome regressions per arm; row weights, if present, are used.
pub fn t_learner(train: &Dataset, base: &LearnerSpec, seed: u64) -> Result<CateModel> {
    let mu0 = fit_arm(train, 0, base, seed)?;
    let mu1 = fit_arm(train, 1, base, seed)?;
    Ok(CateModel::new(
        "t_learner",
        CateVariant::TwoModels { mu0, mu1 },
        serde_json::json!({ "base": snapshot(base) }),
    ))
}

/// Boost one outcome model against arm `arm` of `post`, split 50/50 into
/// calibration and validation rows.
fn boost_on_arm(p: Predictor, post: &Dataset, arm: u8, config: &BoostConfig, seed: u64) -> Result<Predictor> {
    let rows = post.arm_indices(arm)?;
    if rows.len() < 2 {
        log::warn!("post-processing arm t={arm} has {} rows; keeping the initial model", rows.len());
        let status = StopStatus::Skipped {
            reason: format!("arm t={arm} has {} rows", rows.len()),
        };
        let scaler = crate::tabular::OutcomeScaler { lo: 0.0, hi: 1.0 };
        return Ok(Predictor::Boosted(Box::new(BoostedPredictor::unchanged(p, scaler, config, status))));
    }
    let parts = split(&post.select(&rows), &[0.5, 0.5], derive_seed(seed, &[arm as u64]))?;
    Ok(Predictor::Boosted(Box::new(boost(p, &parts[0], &parts[1], config)?)))
}

/// Post-process both outcome models of a two-model CATE against `post`.
pub fn post_process_two_models(model: &CateModel, post: &Dataset, config: &BoostConfig, seed: u64) -> Result<CateModel> {
    config.validate()?;
    let (mu0, mu1) = model
        .outcome_models()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a two-model CATE", model.method)))?;
    let mu0 = boost_on_arm(mu0.clone(), post, 0, config, seed)?;
    let mu1 = boost_on_arm(mu1.clone(), post, 1, config, seed)?;
    Ok(CateModel::new(
        &format!("mc_{}", model.method),
        CateVariant::TwoModels { mu0, mu1 },
        serde_json::json!({ "initial": model.config, "boost": snapshot(config) }),
    ))
}

/// T-learner on `train`, each arm then boosted on the same arm of `post`.
pub fn mc_t_learner(
    train: &Dataset,
    post: &Dataset,
    base: &LearnerSpec,
    config: &BoostConfig,
    seed: u64,
) -> Result<CateModel> {
    post.arm(0)?;
    post.arm(1)?;
    let initial = t_learner(train, base, seed)?;
    post_process_two_models(&initial, post, config, derive_seed(seed, &[0x9057]))
}

/// T-learner on observational data, boosted against the trial arms.
pub fn mc_obs_rct_t_learner(
    obs: &Dataset,
    rct: &Dataset,
    base: &LearnerSpec,
    config: &BoostConfig,
    seed: u64,
) -> Result<CateModel> {
    let mut model = mc_t_learner(obs, rct, base, config, seed)?;
    model.method = "mc_obs_rct_t_learner".into();
    Ok(model)
}

/// `(T − e)/(e(1 − e)) · (Y − μ_T(X)) + μ1(X) − μ0(X)`.
pub fn dr_pseudo_outcome(x: &[f64], t: u8, y: f64, nuis: &NuisancePair) -> Result<f64> {
    let e = nuis.propensity(x);
    let mu0 = nuis.mu0.predict_row(x);
    let mu1 = nuis.mu1.predict_row(x);
    let mu_t = if t == 1 { mu1 } else { mu0 };
    let phi = (t as f64 - e) / (e * (1.0 - e)) * (y - mu_t) + mu1 - mu0;
    if !phi.is_finite() {
        return Err(Error::NonFinite(format!("pseudo-outcome (e = {e}, mu0 = {mu0}, mu1 = {mu1})")));
    }
    Ok(phi)
}

pub fn dr_pseudo_outcomes(data: &Dataset, nuis: &NuisancePair) -> Result<Array1<f64>> {
    let t = data.treatment()?;
    data.x()
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| dr_pseudo_outcome(&r.to_vec(), t[i], data.y()[i], nuis))
        .collect()
}

/// Propensity on `d1a`, arm-wise outcome models on `d1b`.
pub fn fit_nuisances(
    d1a: &Dataset,
    d1b: &Dataset,
    base: &LearnerSpec,
    prop: &PropensitySpec,
    seed: u64,
) -> Result<NuisancePair> {
    let e = prop.fit(d1a.x(), d1a.treatment()?, derive_seed(seed, &[0xe]))?;
    let mu0 = fit_arm(d1b, 0, base, derive_seed(seed, &[0x10]))?;
    let mu1 = fit_arm(d1b, 1, base, derive_seed(seed, &[0x10]))?;
    Ok(NuisancePair { e, mu0, mu1 })
}

/// Regress the pseudo-outcome on `d2` with the given nuisances.
pub fn pseudo_outcome_regression(d2: &Dataset, nuis: &NuisancePair, base: &LearnerSpec, seed: u64) -> Result<CateModel> {
    let phi = dr_pseudo_outcomes(d2, nuis)?;
    let tau = base.fit(d2.x(), phi.view(), d2.weights(), derive_seed(seed, &[0x20]))?;
    Ok(CateModel::new(
        "dr_learner",
        CateVariant::PseudoRegression { tau },
        serde_json::json!({ "base": snapshot(base) }),
    ))
}

/// DR-learner: propensity on `d1a`, outcome models on `d1b`, pseudo-outcome
/// regression on `d2`.
pub fn dr_learner(
    d1a: &Dataset,
    d1b: &Dataset,
    d2: &Dataset,
    base: &LearnerSpec,
    prop: &PropensitySpec,
    seed: u64,
) -> Result<CateModel> {
    let nuis = fit_nuisances(d1a, d1b, base, prop, seed)?;
    let mut model = pseudo_outcome_regression(d2, &nuis, base, seed)?;
    model.config["propensity"] = snapshot(prop);
    Ok(model)
}

/// Boost a pseudo-outcome regression against `φ` computed on `d3`. With
/// `d3_propensity` the given model (for instance a known trial design) replaces
/// the fitted propensity inside `φ`.
pub fn post_process_pseudo(
    model: &CateModel,
    nuis: &NuisancePair,
    d3: &Dataset,
    d3_propensity: Option<&Predictor>,
    config: &BoostConfig,
    seed: u64,
) -> Result<CateModel> {
    config.validate()?;
    let tau = match &model.variant {
        CateVariant::PseudoRegression { tau } => tau.clone(),
        _ => return Err(Error::InvalidArgument(format!("{} is not a pseudo-outcome regression", model.method))),
    };
    let local;
    let nuis = match d3_propensity {
        Some(e) => {
            local = NuisancePair {
                e: e.clone(),
                ..nuis.clone()
            };
            &local
        }
        None => nuis,
    };
    let phi = dr_pseudo_outcomes(d3, nuis)?;
    let target = d3.with_outcome(phi)?;
    let parts = split(&target, &[0.5, 0.5], seed)?;
    let boosted = boost(tau, &parts[0], &parts[1], config)?;
    Ok(CateModel::new(
        &format!("mc_{}", model.method),
        CateVariant::PseudoRegression {
            tau: Predictor::Boosted(Box::new(boosted)),
        },
        serde_json::json!({ "initial": model.config, "boost": snapshot(config) }),
    ))
}

#[allow(clippy::too_many_arguments)]
pub fn mc_dr_learner(
    d1a: &Dataset,
    d1b: &Dataset,
    d2: &Dataset,
    d3: &Dataset,
    base: &LearnerSpec,
    prop: &PropensitySpec,
    config: &BoostConfig,
    d3_propensity: Option<&Predictor>,
    seed: u64,
) -> Result<CateModel> {
    let nuis = fit_nuisances(d1a, d1b, base, prop, seed)?;
    let model = pseudo_outcome_regression(d2, &nuis, base, seed)?;
    post_process_pseudo(&model, &nuis, d3, d3_propensity, config, derive_seed(seed, &[0x9057]))
}

/// Treatment appended as the last covariate column.
pub fn with_treatment_column(x: ArrayView2<'_, f64>, t: f64) -> Array2<f64> {
    let mut out = Array2::from_elem((x.nrows(), x.ncols() + 1), t);
    out.slice_mut(s![.., ..x.ncols()]).assign(&x);
    out
}

/// One regression of `Y` on `(X, T)`; `τ(x) = f(x, 1) − f(x, 0)`.
pub fn s_learner(train: &Dataset, base: &LearnerSpec, seed: u64) -> Result<CateModel> {
    let t = train.treatment()?;
    for arm in [0u8, 1] {
        if !t.iter().any(|&v| v == arm) {
            return Err(Error::EmptyArm(arm));
        }
    }
    let mut xt = with_treatment_column(train.x(), 0.0);
    xt.column_mut(train.d()).assign(&t.mapv(f64::from));
    let f = base.fit(xt.view(), train.y(), train.weights(), seed)?;
    Ok(CateModel::new(
        "s_learner",
        CateVariant::Joint { f },
        serde_json::json!({ "base": snapshot(base) }),
    ))
}

/// Mean of `τ̂` over the rows of `x`.
pub fn regression_adjustment_ate(model: &CateModel, x: ArrayView2<'_, f64>) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::InvalidData("no rows to average over".into()));
    }
    Ok(model.predict_tau(x).sum() / x.nrows() as f64)
}

/// Per-row AIPW contributions
/// `T/e (Y − μ1) + μ1 − [(1 − T)/(1 − e) (Y − μ0) + μ0]`.
pub fn aipw_scores(data: &Dataset, nuis: &NuisancePair) -> Result<Array1<f64>> {
    let t = data.treatment()?;
    let y = data.y();
    let mut out = Array1::zeros(data.n());
    for (i, row) in data.x().rows().into_iter().enumerate() {
        let x = row.to_vec();
        let e = nuis.propensity(&x);
        let (mu0, mu1) = (nuis.mu0.predict_row(&x), nuis.mu1.predict_row(&x));
        let ti = t[i] as f64;
        let treated = ti / e * (y[i] - mu1) + mu1;
        let control = (1.0 - ti) / (1.0 - e) * (y[i] - mu0) + mu0;
        out[i] = treated - control;
        if !out[i].is_finite() {
            return Err(Error::NonFinite(format!("AIPW term at row {i}")));
        }
    }
    Ok(out)
}

pub fn aipw_ate(data: &Dataset, nuis: &NuisancePair) -> Result<f64> {
    Ok(aipw_scores(data, nuis)?.mean().expect("non-empty dataset"))
}

/// `|max_f mean((φ − τ) f) − max_f mean((τ̃ − τ) f)|` over an explicit list of
/// functions, with `φ` built from the propensity in `nuis` and the outcome
/// models of `tmodel`.
pub fn prop3_gap(tmodel: &CateModel, nuis: &NuisancePair, data: &Dataset, auditors: &[Predictor]) -> Result<f64> {
    if auditors.is_empty() {
        return Err(Error::InvalidArgument("prop3_gap needs at least one auditor".into()));
    }
    let (mu0, mu1) = tmodel
        .outcome_models()
        .ok_or_else(|| Error::InvalidArgument("prop3_gap needs a two-model CATE".into()))?;
    let combined = NuisancePair {
        e: nuis.e.clone(),
        mu0: mu0.clone(),
        mu1: mu1.clone(),
    };
    let tau = data.truth_tau()?;
    let phi = dr_pseudo_outcomes(data, &combined)?;
    let tau_tilde = tmodel.predict_tau(data.x());
    let dr_err = &phi - &tau;
    let t_err = &tau_tilde - &tau;
    let n = data.n() as f64;
    let mut dr_max = f64::NEG_INFINITY;
    let mut t_max = f64::NEG_INFINITY;
    for f in auditors {
        let fx = f.predict(data.x());
        dr_max = dr_max.max(dr_err.dot(&fx) / n);
        t_max = t_max.max(t_err.dot(&fx) / n);
    }
    Ok((dr_max - t_max).abs())
}

/// Rows of `x` with the treatment column stacked for both arms; used by tests
/// and diagnostics.
pub fn stack_arms(x: ArrayView2<'_, f64>) -> Array2<f64> {
    ndarray::concatenate(
        Axis(0),
        &[with_treatment_column(x, 0.0).view(), with_treatment_column(x, 1.0).view()],
    )
    .expect("same width")
}

pub const MODEL_FORMAT: &str = "mcate-cate-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format: String,
    version: u32,
    model: CateModel,
}

/// Versioned JSON document for a fitted model.
pub fn model_to_json(model: &CateModel) -> Result<String> {
    let doc = ModelDocument {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        model: model.clone(),
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
}

pub fn model_from_json(text: &str) -> Result<CateModel> {
    let doc: ModelDocument = serde_json::from_str(text).map_err(|e| Error::Format(format!("model document: {e}")))?;
    if doc.format != MODEL_FORMAT {
        return Err(Error::Format(format!("expected format {MODEL_FORMAT:?}, found {:?}", doc.format)));
    }
    if doc.version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {}", doc.version)));
    }
    Ok(doc.model)
}
