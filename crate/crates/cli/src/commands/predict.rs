use std::path::PathBuf;

use mcate::load_features;

use super::{load_model, model_features, stdout_path, write_output};
use crate::failure::Failure;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Model JSON written by `fit`.
    #[arg(long)]
    model: PathBuf,
    /// CSV with the model's feature columns.
    #[arg(long)]
    data: PathBuf,
    /// Feature columns, when the model does not record them.
    #[arg(long, value_delimiter = ',')]
    features: Vec<String>,
    /// Output CSV with `row,tau_hat`; stdout by default.
    #[arg(long, default_value_os_t = stdout_path())]
    out: PathBuf,
}

pub fn run(a: Args) -> Result<(), Failure> {
    let model = load_model(&a.model)?;
    let features = if a.features.is_empty() {
        model_features(&model)
            .ok_or_else(|| Failure::Usage("the model records no feature names; pass --features".into()))?
    } else {
        a.features.clone()
    };
    let x = load_features(&a.data, &features)?;
    let tau = model.predict_tau(x.view());
    let mut out = String::from("row,tau_hat\n");
    for (i, v) in tau.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    write_output(&a.out, out.as_bytes())
}
