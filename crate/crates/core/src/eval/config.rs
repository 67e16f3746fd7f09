use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::forest::ForestParams;
use crate::learners::PropensitySpec;
use crate::mcboost::{AuditorClass, BoostConfig, UpdateRule};
use crate::simgen::{BetaReading, ScenarioId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    TOs,
    TMcRidge,
    TMcTree,
    DrOs,
    DrMcRidge,
    DrMcTree,
    SOs,
    /// Trained with domain-classifier weights towards the test covariates.
    TWos,
    SWos,
    /// Trial data only.
    TCt,
    TWct,
    SCt,
    SWct,
    DrCt,
}

impl Method {
    pub const ALL: [Method; 14] = [
        Method::TOs,
        Method::TMcRidge,
        Method::TMcTree,
        Method::DrOs,
        Method::DrMcRidge,
        Method::DrMcTree,
        Method::SOs,
        Method::TWos,
        Method::SWos,
        Method::TCt,
        Method::TWct,
        Method::SCt,
        Method::SWct,
        Method::DrCt,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Method::TOs => "t_os",
            Method::TMcRidge => "t_mc_ridge",
            Method::TMcTree => "t_mc_tree",
            Method::DrOs => "dr_os",
            Method::DrMcRidge => "dr_mc_ridge",
            Method::DrMcTree => "dr_mc_tree",
            Method::SOs => "s_os",
            Method::TWos => "t_wos",
            Method::SWos => "s_wos",
            Method::TCt => "t_ct",
            Method::TWct => "t_wct",
            Method::SCt => "s_ct",
            Method::SWct => "s_wct",
            Method::DrCt => "dr_ct",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::TOs => "T-learner-OS",
            Method::TMcRidge => "T-learner-MC-Ridge",
            Method::TMcTree => "T-learner-MC-Tree",
            Method::DrOs => "DR-learner-OS",
            Method::DrMcRidge => "DR-learner-MC-Ridge",
            Method::DrMcTree => "DR-learner-MC-Tree",
            Method::SOs => "S-learner-OS",
            Method::TWos => "T-learner-wOS",
            Method::SWos => "S-learner-wOS",
            Method::TCt => "T-learner-CT",
            Method::TWct => "T-learner-wCT",
            Method::SCt => "S-learner-CT",
            Method::SWct => "S-learner-wCT",
            Method::DrCt => "DR-learner-CT",
        }
    }

    /// Shift-reweighted baselines need the test sample; trial baselines need a
    /// trial.
    pub fn applies_to(self, scenario: ScenarioId) -> bool {
        match self {
            Method::TWos | Method::SWos => !scenario.has_rct(),
            Method::TCt | Method::TWct | Method::SCt | Method::SWct | Method::DrCt => scenario.has_rct(),
            _ => true,
        }
    }

    pub fn applicable(scenario: ScenarioId) -> Vec<Method> {
        Method::ALL.into_iter().filter(|m| m.applies_to(scenario)).collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.key() == wanted || m.label().to_ascii_lowercase().replace('-', "_") == wanted)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// Boosting settings shared by the ridge and tree variants of one learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostSchedule {
    pub alpha: f64,
    /// `None` picks the learner's default for the scenario.
    pub eta: Option<f64>,
    pub max_iter: usize,
    pub update: UpdateRule,
    pub buckets: Option<usize>,
}

impl Default for BoostSchedule {
    fn default() -> Self {
        BoostSchedule {
            alpha: 1e-6,
            eta: None,
            max_iter: 5,
            update: UpdateRule::SignedStep,
            buckets: None,
        }
    }
}

impl BoostSchedule {
    pub fn config(&self, auditor: &AuditorClass, default_eta: f64) -> BoostConfig {
        BoostConfig {
            alpha: self.alpha,
            eta: self.eta.unwrap_or(default_eta),
            max_iter: self.max_iter,
            auditor: auditor.clone(),
            update: self.update,
            buckets: self.buckets,
            scaler: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioId,
    pub n_train: Vec<usize>,
    pub shifts: Vec<f64>,
    /// Empty means every method that applies to the scenario.
    pub methods: Vec<Method>,
    pub repetitions: usize,
    /// Audit sample (external-shift designs) or trial size.
    pub audit_size: usize,
    pub test_size: usize,
    pub seed: u64,
    /// Draw a fresh covariance and coefficient set per repetition.
    pub redraw_design: bool,
    pub beta_reading: BetaReading,
    pub forest: ForestParams,
    pub propensity: PropensitySpec,
    /// Penalty of the domain classifier behind the reweighted baselines.
    pub domain_l2: f64,
    pub ridge_auditor: AuditorClass,
    pub tree_auditor: AuditorClass,
    pub t_boost: BoostSchedule,
    pub dr_boost: BoostSchedule,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: ScenarioId::Sim1a,
            n_train: vec![500, 2000, 3500, 5000],
            shifts: (0..=8).map(|i| i as f64 * 0.25).collect(),
            methods: Vec::new(),
            repetitions: 25,
            audit_size: 500,
            test_size: 5000,
            seed: 1,
            redraw_design: true,
            beta_reading: BetaReading::default(),
            forest: ForestParams {
                num_trees: 100,
                ..ForestParams::default()
            },
            propensity: PropensitySpec::default(),
            domain_l2: 1e-3,
            ridge_auditor: AuditorClass::ridge(),
            tree_auditor: AuditorClass::tree(),
            t_boost: BoostSchedule::default(),
            dr_boost: BoostSchedule::default(),
        }
    }
}

/// Deserialize a TOML document; errors name the offending key path.
pub fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = toml::de::Deserializer::parse(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.message().to_string();
        if path == "." {
            Error::InvalidArgument(format!("config: {msg}"))
        } else {
            Error::InvalidArgument(format!("config key '{path}': {msg}"))
        }
    })
}

/// Smallest training size that leaves every DR fold a few rows per arm.
pub const MIN_TRAIN: usize = 30;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        parse_toml(text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn t_eta(&self) -> f64 {
        self.t_boost.eta.unwrap_or(0.5)
    }

    /// 0.1 for the external-shift designs, 0.01 with a trial.
    pub fn dr_eta(&self) -> f64 {
        self.dr_boost
            .eta
            .unwrap_or(if self.scenario.has_rct() { 0.01 } else { 0.1 })
    }

    /// Explicit method list and learning rates.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        if out.methods.is_empty() {
            out.methods = Method::applicable(self.scenario);
        }
        out.t_boost.eta = Some(self.t_eta());
        out.dr_boost.eta = Some(self.dr_eta());
        out
    }

    pub fn methods(&self) -> Vec<Method> {
        if self.methods.is_empty() {
            Method::applicable(self.scenario)
        } else {
            self.methods.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::InvalidArgument(format!("{key}: {msg}")));
        if self.n_train.is_empty() {
            return bad("n_train", "grid is empty".into());
        }
        if let Some(n) = self.n_train.iter().find(|&&n| n < MIN_TRAIN) {
            return bad("n_train", format!("{n} is below the minimum of {MIN_TRAIN}"));
        }
        if self.shifts.is_empty() {
            return bad("shifts", "grid is empty".into());
        }
        if let Some(s) = self.shifts.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return bad("shifts", format!("{s} is not a finite non-negative intensity"));
        }
        if self.repetitions == 0 {
            return bad("repetitions", "must be at least 1".into());
        }
        if self.audit_size < 8 {
            return bad("audit_size", format!("{} is below 8", self.audit_size));
        }
        // the Gaussian KL needs a non-singular sample covariance
        if self.test_size <= crate::simgen::DIM + 1 {
            return bad("test_size", format!("{} is too small", self.test_size));
        }
        if self.scenario.has_rct() && self.audit_size <= crate::simgen::DIM + 1 {
            return bad("audit_size", format!("{} is too small for the trial KL", self.audit_size));
        }
        for m in &self.methods {
            if !m.applies_to(self.scenario) {
                return bad("methods", format!("{m} does not apply to {}", self.scenario));
            }
        }
        if self.forest.num_trees == 0 {
            return bad("forest.num_trees", "must be at least 1".into());
        }
        if !(self.domain_l2.is_finite() && self.domain_l2 >= 0.0) {
            return bad("domain_l2", format!("{} must be >= 0", self.domain_l2));
        }
        let t = self.t_boost.config(&self.ridge_auditor, self.t_eta());
        t.validate().map_err(|e| Error::InvalidArgument(format!("t_boost: {e}")))?;
        let dr = self.dr_boost.config(&self.tree_auditor, self.dr_eta());
        dr.validate().map_err(|e| Error::InvalidArgument(format!("dr_boost: {e}")))?;
        Ok(())
    }
}
