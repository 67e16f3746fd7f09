use std::path::PathBuf;

use mcate::eval::{aggregate, pivot, read_records, Aggregate};

use super::write_output;
use crate::failure::Failure;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Directory holding records.csv, or the file itself.
    #[arg(long)]
    results: PathBuf,
    /// Output directory; defaults to the results directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Table metrics, one wide CSV each.
    #[arg(long, value_delimiter = ',', default_value = "bias_mean,bias_median,mse_mean,mse_median")]
    metrics: Vec<String>,
}

pub fn run(a: Args) -> Result<(), Failure> {
    let records_path = if a.results.is_dir() {
        a.results.join("records.csv")
    } else {
        a.results.clone()
    };
    let out = a.out.clone().unwrap_or_else(|| {
        if a.results.is_dir() {
            a.results.clone()
        } else {
            a.results.parent().map(PathBuf::from).unwrap_or_default()
        }
    });
    let records = read_records(&records_path)?;
    let aggs = aggregate(&records);
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &aggs {
        w.serialize(row).map_err(|e| Failure::Lib(mcate::Error::Format(e.to_string())))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Lib(mcate::Error::Format(e.to_string())))?;
    write_output(&out.join("aggregates.csv"), &bytes)?;
    let mut scenarios: Vec<_> = aggs.iter().map(|a| a.scenario).collect();
    scenarios.dedup();
    for metric in &a.metrics {
        for scn in &scenarios {
            let part: Vec<Aggregate> = aggs.iter().filter(|a| a.scenario == *scn).cloned().collect();
            let table = pivot(&part, metric)?;
            write_output(&out.join(format!("table_{scn}_{metric}.csv")), table.as_bytes())?;
        }
    }
    eprintln!("{} records summarised into {}", records.len(), out.display());
    Ok(())
}
