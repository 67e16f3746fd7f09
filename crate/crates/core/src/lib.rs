//! Multi-accurate post-processing of CATE meta-learners.
//!
//! The crate bundles base learners, the multi-accuracy boosting loop, T-, S-
//! and DR-learners with their boosted variants, covariate-shift utilities,
//! the four simulation designs and a repeated-experiment grid runner.

pub mod cate;
pub mod error;
pub mod eval;
pub mod learners;
pub mod mcboost;
pub mod rng;
pub mod shift;
pub mod simgen;
pub mod tabular;

pub use cate::{CateModel, CateVariant, NuisancePair};
pub use error::{Error, ErrorKind, Result};
pub use eval::{run_grid, ExperimentConfig, ExperimentResult, Method};
pub use learners::{LearnerSpec, Predictor, PropensitySpec};
pub use mcboost::{boost, AuditorClass, BoostConfig, BoostedPredictor, StopStatus};
pub use simgen::{Population, Scenario, ScenarioId};
pub use tabular::{load_csv, load_features, split, write_csv, Dataset, OutcomeScaler, Schema};
