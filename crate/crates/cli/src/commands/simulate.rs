use std::path::PathBuf;

use mcate::simgen::{simulate, BetaReading};
use mcate::{Population, Scenario, ScenarioId};

use super::write_output;
use crate::failure::Failure;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// sim1a, sim1b, sim2a or sim2b.
    #[arg(long)]
    scenario: ScenarioId,
    /// Number of rows.
    #[arg(long)]
    n: usize,
    /// observational, shifted or rct.
    #[arg(long, default_value = "observational")]
    population: String,
    /// Shift intensity for shifted and rct populations.
    #[arg(long, default_value_t = 0.0)]
    shift: f64,
    /// Seed for the design (covariance, coefficients) and the draw.
    #[arg(long)]
    seed: u64,
    /// Separate seed for the design, so several draws share one design.
    #[arg(long)]
    design_seed: Option<u64>,
    /// Reading of the beta propensity term in sim1a.
    #[arg(long, value_enum, default_value = "scaled-density")]
    beta_reading: Reading,
    /// Output CSV, `-` for stdout.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Reading {
    ScaledDensity,
    RawDensity,
    Cdf,
}

pub fn run(a: Args) -> Result<(), Failure> {
    let population = Population::parse(&a.population, a.shift)?;
    let reading = match a.beta_reading {
        Reading::ScaledDensity => BetaReading::ScaledDensity,
        Reading::RawDensity => BetaReading::RawDensity,
        Reading::Cdf => BetaReading::Cdf,
    };
    let scn = Scenario::new(a.scenario, a.design_seed.unwrap_or(a.seed))?.with_beta_reading(reading);
    let data = simulate(&scn, a.n, population, a.seed)?;
    let mut buf = Vec::new();
    mcate::tabular::write_csv_to(&data, &mut buf).map_err(|e| Failure::Lib(mcate::Error::Format(e.to_string())))?;
    write_output(&a.out, &buf)?;
    log::info!("wrote {} rows of {}", data.n(), a.scenario);
    Ok(())
}
