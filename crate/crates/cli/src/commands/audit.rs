use std::path::PathBuf;

use mcate::cate::{with_treatment_column, CateVariant};
use mcate::mcboost::audit;
use mcate::{load_csv, AuditorClass, Dataset, Predictor};

use super::{load_model, model_features, stdout_path, write_output, SchemaArgs};
use crate::failure::Failure;

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum AuditorKind {
    Ridge,
    Tree,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "ridge")]
    auditor: AuditorKind,
    /// Ridge penalty.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Tree depth.
    #[arg(long, default_value_t = 3)]
    max_depth: usize,
    #[command(flatten)]
    schema: SchemaArgs,
}

fn describe(c: &Predictor) -> String {
    match c {
        Predictor::Linear(m) => format!("ridge intercept={} coefficients={:?}", m.intercept, m.coefficients),
        Predictor::Tree(t) => format!("tree nodes={} max_depth={}", t.nodes.len(), t.max_depth),
        Predictor::Constant { value } => format!("constant {value}"),
        other => other.kind().to_string(),
    }
}

pub fn run(a: Args) -> Result<(), Failure> {
    let model = load_model(&a.model)?;
    let mut schema = a.schema.schema();
    if schema.features.is_empty() {
        schema.features = model_features(&model).unwrap_or_default();
    }
    let data = load_csv(&a.data, &schema)?;
    let auditor = match a.auditor {
        AuditorKind::Ridge => AuditorClass::Ridge { lambda: a.lambda },
        AuditorKind::Tree => AuditorClass::Tree {
            max_depth: a.max_depth,
            min_node_size: 20,
        },
    };
    // (label, predictor, data it is audited on)
    let mut targets: Vec<(String, Predictor, Dataset)> = Vec::new();
    match &model.variant {
        CateVariant::TwoModels { mu0, mu1 } => {
            targets.push(("mu0 on t=0".into(), mu0.clone(), data.arm(0)?));
            targets.push(("mu1 on t=1".into(), mu1.clone(), data.arm(1)?));
        }
        CateVariant::PseudoRegression { tau } => {
            let truth = data.truth_tau().map_err(|_| {
                Failure::Lib(mcate::Error::MissingColumn(
                    "truth_tau (needed to audit an effect regression)".into(),
                ))
            })?;
            targets.push(("tau against truth_tau".into(), tau.clone(), data.with_outcome(truth.to_owned())?));
        }
        CateVariant::Joint { f } => {
            let mut xt = with_treatment_column(data.x(), 0.0);
            xt.column_mut(data.d()).assign(&data.treatment()?.mapv(f64::from));
            targets.push(("joint outcome model".into(), f.clone(), Dataset::new(xt, data.y().to_owned())?));
        }
    }
    let mut worst: Option<(String, f64)> = None;
    let mut lines = Vec::new();
    for (label, p, d) in &targets {
        let res = audit(p, d, d, &auditor)?;
        let err = res.delta.abs();
        lines.push(format!("{label}: n={} error={err} auditor={}", d.n(), describe(&res.c)));
        if worst.as_ref().is_none_or(|w| err > w.1) {
            worst = Some((label.clone(), err));
        }
    }
    let (label, err) = worst.expect("at least one audit target");
    let mut text = format!("multiaccuracy_error {err}\nworst {label}\n");
    for l in lines {
        text.push_str(&l);
        text.push('\n');
    }
    write_output(&stdout_path(), text.as_bytes())
}
