use std::path::PathBuf;

use mcate::cate::{self, model_to_json};
use mcate::eval::parse_toml;
use mcate::learners::forest::ForestParams;
use mcate::{load_csv, split, AuditorClass, BoostConfig, Dataset, LearnerSpec, Predictor, PropensitySpec, Schema};
use serde::Deserialize;

use super::{read_text, write_output, SchemaArgs};
use crate::failure::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FitMethod {
    TLearner,
    SLearner,
    DrLearner,
    McTLearner,
    McObsRctTLearner,
    McDrLearner,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum BaseKind {
    Forest,
    Ridge,
    Tree,
    Constant,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum AuditorKind {
    Ridge,
    Tree,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, value_enum)]
    method: FitMethod,
    /// Training CSV (observational data for mc-obs-rct-t-learner).
    #[arg(long)]
    train: PathBuf,
    /// Post-processing CSV (audit sample or trial) for the boosted methods.
    #[arg(long)]
    post: Option<PathBuf>,
    /// TOML file with `seed`, `[learner]`, `[propensity]`, `[boost]` and
    /// `[schema]` sections. Flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Base learner for outcome and pseudo-outcome regressions.
    #[arg(long, value_enum)]
    learner: Option<BaseKind>,
    /// Trees per forest.
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long, value_enum)]
    auditor: Option<AuditorKind>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Known treatment probability used instead of a fitted propensity.
    #[arg(long)]
    known_propensity: Option<f64>,
    /// Known treatment probability of the post-processing data (DR boosting).
    #[arg(long)]
    post_propensity: Option<f64>,
    #[command(flatten)]
    schema: SchemaArgs,
    /// Output model JSON, `-` for stdout.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    seed: Option<u64>,
    learner: Option<LearnerSpec>,
    propensity: Option<PropensitySpec>,
    boost: Option<BoostConfig>,
    schema: Option<Schema>,
}

struct Resolved {
    seed: u64,
    learner: LearnerSpec,
    propensity: PropensitySpec,
    boost: BoostConfig,
    schema: Schema,
}

fn resolve(a: &Args) -> Result<Resolved, Failure> {
    let file: FitConfig = match &a.config {
        Some(p) => parse_toml(&read_text(p)?)?,
        None => FitConfig::default(),
    };
    let mut learner = file.learner.unwrap_or(LearnerSpec::Forest(ForestParams {
        num_trees: 100,
        ..ForestParams::default()
    }));
    if let Some(kind) = a.learner {
        learner = match kind {
            BaseKind::Forest => LearnerSpec::Forest(ForestParams {
                num_trees: 100,
                ..ForestParams::default()
            }),
            BaseKind::Ridge => LearnerSpec::ridge(1.0),
            BaseKind::Tree => LearnerSpec::Tree {
                max_depth: 3,
                min_node_size: 20,
            },
            BaseKind::Constant => LearnerSpec::Constant,
        };
    }
    if let Some(n) = a.trees {
        match &mut learner {
            LearnerSpec::Forest(p) => p.num_trees = n,
            _ => return Err(Failure::Usage("--trees applies to forest learners only".into())),
        }
    }
    let mut boost = file.boost.unwrap_or_default();
    if let Some(k) = a.auditor {
        boost.auditor = match k {
            AuditorKind::Ridge => AuditorClass::ridge(),
            AuditorKind::Tree => AuditorClass::tree(),
        };
    }
    boost.alpha = a.alpha.unwrap_or(boost.alpha);
    boost.eta = a.eta.unwrap_or(boost.eta);
    boost.max_iter = a.max_iter.unwrap_or(boost.max_iter);
    boost.validate()?;
    let mut propensity = file.propensity.unwrap_or_default();
    if let Some(p) = a.known_propensity {
        propensity = PropensitySpec::Known { p };
    }
    let schema = file.schema.unwrap_or_else(|| a.schema.schema());
    Ok(Resolved {
        seed: a.seed.or(file.seed).unwrap_or(0),
        learner,
        propensity,
        boost,
        schema,
    })
}

fn thirds(data: &Dataset, seed: u64) -> Result<Vec<Dataset>, Failure> {
    Ok(split(data, &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], seed)?)
}

pub fn run(a: Args) -> Result<(), Failure> {
    let r = resolve(&a)?;
    let train = load_csv(&a.train, &r.schema)?;
    let post = match &a.post {
        Some(p) => Some(load_csv(p, &r.schema)?),
        None => None,
    };
    let need_post = || {
        post.as_ref()
            .ok_or_else(|| Failure::Usage(format!("--post is required for {:?}", a.method)))
    };
    if let Some(p) = a.post_propensity {
        if !(p > 0.0 && p < 1.0) {
            return Err(Failure::Usage(format!("--post-propensity {p} must lie in (0, 1)")));
        }
    }
    let mut model = match a.method {
        FitMethod::TLearner => cate::t_learner(&train, &r.learner, r.seed)?,
        FitMethod::SLearner => cate::s_learner(&train, &r.learner, r.seed)?,
        FitMethod::DrLearner => {
            let f = thirds(&train, r.seed)?;
            cate::dr_learner(&f[0], &f[1], &f[2], &r.learner, &r.propensity, r.seed)?
        }
        FitMethod::McTLearner => cate::mc_t_learner(&train, need_post()?, &r.learner, &r.boost, r.seed)?,
        FitMethod::McObsRctTLearner => {
            cate::mc_obs_rct_t_learner(&train, need_post()?, &r.learner, &r.boost, r.seed)?
        }
        FitMethod::McDrLearner => {
            let f = thirds(&train, r.seed)?;
            let known = a.post_propensity.map(|value| Predictor::Constant { value });
            cate::mc_dr_learner(
                &f[0],
                &f[1],
                &f[2],
                need_post()?,
                &r.learner,
                &r.propensity,
                &r.boost,
                known.as_ref(),
                r.seed,
            )?
        }
    };
    model.config["features"] = serde_json::json!(train.feature_names());
    model.config["seed"] = serde_json::json!(r.seed);
    for status in model.boost_statuses() {
        log::info!("boosting: {status:?}");
    }
    write_output(&a.out, model_to_json(&model)?.as_bytes())
}
