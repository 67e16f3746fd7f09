//! Base regressors and classifiers, plus the [`Predictor`] enum that every
//! fitted model is stored as.

pub mod forest;
pub mod logistic;
pub mod ridge;
pub mod tree;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcboost::BoostedPredictor;
pub use forest::{fit_forest, ForestModel, ForestParams};
pub use logistic::{fit_logistic, LogisticModel};
pub use ridge::{fit_ridge, LinearModel};
pub use tree::{fit_tree, Node, TreeModel};

/// A fitted real-valued function of a covariate vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Predictor {
    Constant { value: f64 },
    Linear(LinearModel),
    Tree(TreeModel),
    Forest(ForestModel),
    /// Returns the clipped probability of class 1.
    Logistic(LogisticModel),
    Boosted(Box<BoostedPredictor>),
}

impl Predictor {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            Predictor::Constant { value } => *value,
            Predictor::Linear(m) => m.predict_row(x),
            Predictor::Tree(m) => m.predict_row(x),
            Predictor::Forest(m) => m.predict_row(x),
            Predictor::Logistic(m) => m.predict_proba(x),
            Predictor::Boosted(m) => m.predict_row(x),
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        let mut buf = vec![0.0; x.ncols()];
        x.rows()
            .into_iter()
            .map(|row| {
                buf.iter_mut().zip(row).for_each(|(b, v)| *b = *v);
                self.predict_row(&buf)
            })
            .collect()
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Predictor::Constant { .. } => "constant",
            Predictor::Linear(_) => "linear",
            Predictor::Tree(_) => "tree",
            Predictor::Forest(_) => "forest",
            Predictor::Logistic(_) => "logistic",
            Predictor::Boosted(_) => "boosted",
        }
    }
}

/// How to fit an outcome regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerSpec {
    /// Weighted mean of the target.
    Constant,
    Ridge {
        #[serde(default = "one")]
        lambda: f64,
        #[serde(default = "yes")]
        standardize: bool,
    },
    Tree {
        #[serde(default = "three")]
        max_depth: usize,
        #[serde(default = "twenty")]
        min_node_size: usize,
    },
    Forest(ForestParams),
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn three() -> usize {
    3
}
fn twenty() -> usize {
    20
}

impl Default for LearnerSpec {
    fn default() -> Self {
        LearnerSpec::Forest(ForestParams::default())
    }
}

impl LearnerSpec {
    pub fn ridge(lambda: f64) -> Self {
        LearnerSpec::Ridge {
            lambda,
            standardize: true,
        }
    }

    pub fn forest(num_trees: usize) -> Self {
        LearnerSpec::Forest(ForestParams {
            num_trees,
            ..ForestParams::default()
        })
    }

    pub fn fit(
        &self,
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        weights: Option<ArrayView1<'_, f64>>,
        seed: u64,
    ) -> Result<Predictor> {
        if x.nrows() == 0 {
            return Err(Error::InvalidData("cannot fit on zero rows".into()));
        }
        Ok(match self {
            LearnerSpec::Constant => {
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("regression target".into()));
                }
                let value = match weights {
                    Some(w) => {
                        let total: f64 = w.sum();
                        if !(total > 0.0) {
                            return Err(Error::InvalidData("weights sum to zero".into()));
                        }
                        w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / total
                    }
                    None => y.mean().unwrap_or(0.0),
                };
                Predictor::Constant { value }
            }
            LearnerSpec::Ridge {
                lambda,
                standardize,
            } => Predictor::Linear(fit_ridge(x, y, *lambda, weights, *standardize)?),
            LearnerSpec::Tree {
                max_depth,
                min_node_size,
            } => Predictor::Tree(fit_tree(x, y, *max_depth, *min_node_size, weights)?),
            LearnerSpec::Forest(p) => Predictor::Forest(fit_forest(x, y, weights, p, seed)?),
        })
    }
}

/// How to obtain the treatment propensity `P(T = 1 | x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PropensitySpec {
    Logistic {
        #[serde(default = "small_l2")]
        l2: f64,
    },
    /// Design propensity, e.g. 0.5 in a randomized trial.
    Known { p: f64 },
    /// Probability forest: regression forest on the 0/1 treatment.
    Forest(ForestParams),
}

fn small_l2() -> f64 {
    1e-3
}

impl Default for PropensitySpec {
    fn default() -> Self {
        PropensitySpec::Logistic { l2: small_l2() }
    }
}

impl PropensitySpec {
    pub fn fit(&self, x: ArrayView2<'_, f64>, t: ArrayView1<'_, u8>, seed: u64) -> Result<Predictor> {
        match self {
            PropensitySpec::Logistic { l2 } => {
                Ok(Predictor::Logistic(fit_logistic(x, t, *l2, 100, 1e-8)?))
            }
            PropensitySpec::Known { p } => {
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(Error::InvalidArgument(format!("known propensity {p} outside (0, 1)")));
                }
                Ok(Predictor::Constant { value: *p })
            }
            PropensitySpec::Forest(params) => {
                let y = t.mapv(f64::from);
                Ok(Predictor::Forest(fit_forest(x, y.view(), None, params, seed)?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    #[test]
    fn specs_parse_with_defaults() {
        let s: LearnerSpec = parse(r#"{"kind":"ridge"}"#);
        assert_eq!(s, LearnerSpec::ridge(1.0));
        let s: LearnerSpec = parse(r#"{"kind":"forest","num_trees":50}"#);
        assert_eq!(s, LearnerSpec::forest(50));
        let s: PropensitySpec = parse(r#"{"kind":"known","p":0.5}"#);
        assert_eq!(s, PropensitySpec::Known { p: 0.5 });
        assert!(serde_json::from_str::<LearnerSpec>(r#"{"kind":"forest","trees":50}"#).is_err());
    }

    fn parse<T: serde::de::DeserializeOwned>(s: &str) -> T {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn constant_learner_is_weighted_mean() {
        let x = array![[0.0], [1.0], [2.0]];
        let y = array![1.0, 2.0, 6.0];
        let w = array![1.0, 1.0, 2.0];
        let p = LearnerSpec::Constant.fit(x.view(), y.view(), Some(w.view()), 0).unwrap();
        assert_eq!(p.predict_row(&[5.0]), 15.0 / 4.0);
    }

    #[test]
    fn predictor_json_round_trip() {
        let x = array![[0.0, 1.0], [1.0, 0.0], [2.0, 2.0], [3.0, 1.0]];
        let y = array![1.0, 2.0, 4.0, 3.0];
        for spec in [
            LearnerSpec::ridge(0.5),
            LearnerSpec::Tree { max_depth: 2, min_node_size: 1 },
            LearnerSpec::forest(5),
        ] {
            let p = spec.fit(x.view(), y.view(), None, 3).unwrap();
            let back: Predictor = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
            assert_eq!(p.predict(x.view()), back.predict(x.view()));
        }
    }
}
