use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use super::results::{ExperimentResult, Record};
use super::{ate_bias, cate_mse};
use crate::cate::{
    dr_learner, fit_nuisances, post_process_pseudo, post_process_two_models, pseudo_outcome_regression, s_learner,
    t_learner, CateModel, NuisancePair,
};
use crate::error::Result;
use crate::learners::{LearnerSpec, Predictor, PropensitySpec};
use crate::rng::{derive_seed, label_key};
use crate::shift::{domain_weights, gaussian_kl};
use crate::simgen::{simulate, Population, Scenario};
use crate::tabular::{split, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub n_train: usize,
    pub shift: f64,
}

struct RepData {
    train: Dataset,
    audit: Dataset,
    test: Dataset,
    kl: f64,
}

fn draw(cfg: &ExperimentConfig, cell: CellKey, seed: u64) -> Result<RepData> {
    let design_seed = if cfg.redraw_design {
        derive_seed(seed, &[label_key("design")])
    } else {
        derive_seed(cfg.seed, &[label_key("design")])
    };
    let scn = Scenario::new(cfg.scenario, design_seed)?.with_beta_reading(cfg.beta_reading);
    let sub = |label: &str| derive_seed(seed, &[label_key(label)]);
    let train = simulate(&scn, cell.n_train, Population::Observational, sub("train"))?;
    let (audit, test, kl) = if cfg.scenario.has_rct() {
        let rct = simulate(&scn, cfg.audit_size, Population::Rct(cell.shift), sub("audit"))?;
        let test = simulate(&scn, cfg.test_size, Population::Observational, sub("test"))?;
        let kl = gaussian_kl(test.x(), rct.x())?;
        (rct, test, kl)
    } else {
        let audit = simulate(&scn, cfg.audit_size, Population::Observational, sub("audit"))?;
        let test = simulate(&scn, cfg.test_size, Population::Shifted(cell.shift), sub("test"))?;
        let kl = gaussian_kl(test.x(), train.x())?;
        (audit, test, kl)
    };
    Ok(RepData { train, audit, test, kl })
}

/// Fitted models shared by several methods of one repetition.
struct Shared<'a> {
    cfg: &'a ExperimentConfig,
    data: &'a RepData,
    seed: u64,
    base: LearnerSpec,
    t_os: Option<std::result::Result<(CateModel, f64), String>>,
    dr_os: Option<std::result::Result<(CateModel, NuisancePair, f64), String>>,
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> std::result::Result<(T, f64), String> {
    let start = Instant::now();
    f().map(|v| (v, start.elapsed().as_secs_f64())).map_err(|e| e.to_string())
}

impl<'a> Shared<'a> {
    fn t_os(&mut self) -> std::result::Result<(CateModel, f64), String> {
        if self.t_os.is_none() {
            let seed = derive_seed(self.seed, &[label_key("t_os")]);
            self.t_os = Some(timed(|| t_learner(&self.data.train, &self.base, seed)));
        }
        self.t_os.clone().expect("set above")
    }

    fn dr_os(&mut self) -> std::result::Result<(CateModel, NuisancePair, f64), String> {
        if self.dr_os.is_none() {
            let seed = derive_seed(self.seed, &[label_key("dr_os")]);
            let (data, base, prop) = (self.data, &self.base, &self.cfg.propensity);
            self.dr_os = Some(
                timed(|| {
                    let folds = split(&data.train, &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], seed)?;
                    let nuis = fit_nuisances(&folds[0], &folds[1], base, prop, seed)?;
                    let model = pseudo_outcome_regression(&folds[2], &nuis, base, seed)?;
                    Ok((model, nuis))
                })
                .map(|((m, n), s)| (m, n, s)),
            );
        }
        self.dr_os.clone().expect("set above")
    }

    fn fit(&mut self, method: Method) -> std::result::Result<(CateModel, f64), String> {
        let cfg = self.cfg;
        let data = self.data;
        let seed = derive_seed(self.seed, &[label_key(method.key())]);
        let base = self.base.clone();
        let trial_e = Predictor::Constant { value: 0.5 };
        match method {
            Method::TOs => self.t_os(),
            Method::TMcRidge | Method::TMcTree => {
                let (initial, secs) = self.t_os()?;
                let auditor = if method == Method::TMcRidge { &cfg.ridge_auditor } else { &cfg.tree_auditor };
                let bc = cfg.t_boost.config(auditor, cfg.t_eta());
                let (m, extra) = timed(|| post_process_two_models(&initial, &data.audit, &bc, seed))?;
                Ok((m, secs + extra))
            }
            Method::DrOs => self.dr_os().map(|(m, _, s)| (m, s)),
            Method::DrMcRidge | Method::DrMcTree => {
                let (initial, nuis, secs) = self.dr_os()?;
                let auditor = if method == Method::DrMcRidge { &cfg.ridge_auditor } else { &cfg.tree_auditor };
                let bc = cfg.dr_boost.config(auditor, cfg.dr_eta());
                let known = cfg.scenario.has_rct().then_some(&trial_e);
                let (m, extra) = timed(|| post_process_pseudo(&initial, &nuis, &data.audit, known, &bc, seed))?;
                Ok((m, secs + extra))
            }
            Method::SOs => timed(|| s_learner(&data.train, &base, seed)),
            Method::TWos => timed(|| {
                let w = domain_weights(&data.train, &data.test, cfg.domain_l2)?;
                t_learner(&data.train.clone().with_weights(w)?, &base, seed)
            }),
            Method::SWos => timed(|| {
                let w = domain_weights(&data.train, &data.test, cfg.domain_l2)?;
                s_learner(&data.train.clone().with_weights(w)?, &base, seed)
            }),
            Method::TCt => timed(|| t_learner(&data.audit, &base, seed)),
            Method::SCt => timed(|| s_learner(&data.audit, &base, seed)),
            Method::TWct => timed(|| {
                let w = domain_weights(&data.audit, &data.train, cfg.domain_l2)?;
                t_learner(&data.audit.clone().with_weights(w)?, &base, seed)
            }),
            Method::SWct => timed(|| {
                let w = domain_weights(&data.audit, &data.train, cfg.domain_l2)?;
                s_learner(&data.audit.clone().with_weights(w)?, &base, seed)
            }),
            Method::DrCt => timed(|| {
                let folds = split(&data.audit, &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], seed)?;
                dr_learner(&folds[0], &folds[1], &folds[2], &base, &PropensitySpec::Known { p: 0.5 }, seed)
            }),
        }
    }
}

fn cell_seed(cfg: &ExperimentConfig, cell: CellKey, rep: usize) -> u64 {
    derive_seed(
        cfg.seed,
        &[label_key(cfg.scenario.as_str()), cell.n_train as u64, cell.shift.to_bits(), rep as u64],
    )
}

/// One repetition of one cell: every configured method, one record each.
pub fn run_repetition(cfg: &ExperimentConfig, cell: CellKey, rep: usize) -> Vec<Record> {
    let seed = cell_seed(cfg, cell, rep);
    let methods = cfg.methods();
    let record = |method: Method, kl: Option<f64>| Record {
        scenario: cfg.scenario,
        n_train: cell.n_train,
        shift: cell.shift,
        method,
        rep,
        bias: None,
        mse: None,
        kl,
        seconds: 0.0,
        error: None,
    };
    let data = match draw(cfg, cell, seed) {
        Ok(d) => d,
        Err(e) => {
            log::warn!("{} n={} s={} rep={rep}: data generation failed: {e}", cfg.scenario, cell.n_train, cell.shift);
            return methods
                .into_iter()
                .map(|m| Record {
                    error: Some(format!("data: {e}")),
                    ..record(m, None)
                })
                .collect();
        }
    };
    let mut shared = Shared {
        cfg,
        data: &data,
        seed,
        base: LearnerSpec::Forest(cfg.forest.clone()),
        t_os: None,
        dr_os: None,
    };
    methods
        .into_iter()
        .map(|m| {
            let mut r = record(m, Some(data.kl));
            let scored = shared.fit(m).and_then(|(model, secs)| {
                r.seconds = secs;
                let bias = ate_bias(&model, &data.test).map_err(|e| e.to_string())?;
                let mse = cate_mse(&model, &data.test).map_err(|e| e.to_string())?;
                Ok((bias, mse))
            });
            match scored {
                Ok((b, e)) => {
                    r.bias = Some(b);
                    r.mse = Some(e);
                }
                Err(e) => {
                    log::warn!("{} n={} s={} rep={rep} {m}: {e}", cfg.scenario, cell.n_train, cell.shift);
                    r.error = Some(e);
                }
            }
            r
        })
        .collect()
}

/// Every cell and repetition, in parallel on the current rayon pool.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mut tasks = Vec::new();
    for &n_train in &cfg.n_train {
        for &shift in &cfg.shifts {
            for rep in 0..cfg.repetitions {
                tasks.push((CellKey { n_train, shift }, rep));
            }
        }
    }
    let records: Vec<Record> = tasks
        .par_iter()
        .flat_map_iter(|&(cell, rep)| run_repetition(cfg, cell, rep))
        .collect();
    Ok(ExperimentResult::new(cfg.resolved(), records))
}
