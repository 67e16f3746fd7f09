use std::path::PathBuf;

use mcate::eval::{run_grid, write_results};
use mcate::ExperimentConfig;

use super::read_text;
use crate::failure::Failure;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Experiment TOML; omitted keys take the published defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Result directory for records.csv, aggregates.csv, timings.csv and
    /// config.resolved.
    #[arg(long)]
    out: PathBuf,
    /// Master seed, overriding the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Repetitions per cell, overriding the file.
    #[arg(long)]
    repetitions: Option<usize>,
    /// Worker threads; default is the available parallelism.
    #[arg(long)]
    jobs: Option<usize>,
}

pub fn run(a: Args) -> Result<(), Failure> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::from_toml(&read_text(p)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.repetitions {
        cfg.repetitions = r;
    }
    cfg.validate()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = a.jobs {
        if j == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool
        .build()
        .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
    let result = pool.install(|| run_grid(&cfg))?;
    write_results(&a.out, &result)?;
    let failed = result.records.iter().filter(|r| r.error.is_some()).count();
    eprintln!(
        "{} records ({} failed) written to {}",
        result.records.len(),
        failed,
        a.out.display()
    );
    Ok(())
}
