use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use crate::error::{Error, Result};
use crate::simgen::ScenarioId;

/// One method on one repetition of one cell. Wall time is kept out of the
/// serialized form so result files are reproducible; see `write_results`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub scenario: ScenarioId,
    pub n_train: usize,
    pub shift: f64,
    pub method: Method,
    pub rep: usize,
    pub bias: Option<f64>,
    pub mse: Option<f64>,
    pub kl: Option<f64>,
    #[serde(skip)]
    pub seconds: f64,
    pub error: Option<String>,
}

impl Record {
    /// Cell key order: scenario, training size, shift, method, repetition.
    pub fn order(a: &Record, b: &Record) -> Ordering {
        (a.scenario.as_str(), a.n_train)
            .cmp(&(b.scenario.as_str(), b.n_train))
            .then(a.shift.total_cmp(&b.shift))
            .then((a.method, a.rep).cmp(&(b.method, b.rep)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scenario: ScenarioId,
    pub n_train: usize,
    pub shift: f64,
    pub method: Method,
    pub count: usize,
    pub failed: usize,
    pub bias_mean: Option<f64>,
    pub bias_median: Option<f64>,
    pub bias_q1: Option<f64>,
    pub bias_q3: Option<f64>,
    pub mse_mean: Option<f64>,
    pub mse_median: Option<f64>,
    pub mse_q1: Option<f64>,
    pub mse_q3: Option<f64>,
    pub kl_mean: Option<f64>,
}

impl Aggregate {
    pub fn metric(&self, name: &str) -> Result<Option<f64>> {
        Ok(match name {
            "bias_mean" => self.bias_mean,
            "bias_median" => self.bias_median,
            "bias_q1" => self.bias_q1,
            "bias_q3" => self.bias_q3,
            "mse_mean" => self.mse_mean,
            "mse_median" => self.mse_median,
            "mse_q1" => self.mse_q1,
            "mse_q3" => self.mse_q3,
            "kl_mean" => self.kl_mean,
            _ => return Err(Error::InvalidArgument(format!("unknown metric {name:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub records: Vec<Record>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentResult {
    pub fn new(config: ExperimentConfig, mut records: Vec<Record>) -> Self {
        records.sort_by(Record::order);
        let aggregates = aggregate(&records);
        ExperimentResult {
            config,
            records,
            aggregates,
        }
    }

    pub fn find(&self, n_train: usize, shift: f64, method: Method) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.n_train == n_train && a.shift == shift && a.method == method)
    }
}

/// Linear-interpolation quantile of sorted data (R's default type 7).
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per cell and method summaries over successful repetitions.
pub fn aggregate(records: &[Record]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(&str, usize, u64, Method), Vec<&Record>> = BTreeMap::new();
    for r in records {
        // shifts are non-negative, so bit patterns sort numerically
        groups
            .entry((r.scenario.as_str(), r.n_train, r.shift.to_bits(), r.method))
            .or_default()
            .push(r);
    }
    groups
        .into_values()
        .map(|rs| {
            let ok: Vec<&&Record> = rs.iter().filter(|r| r.error.is_none()).collect();
            let sorted = |f: fn(&Record) -> Option<f64>| {
                let mut v: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
                v.sort_by(f64::total_cmp);
                v
            };
            let bias = sorted(|r| r.bias);
            let mse = sorted(|r| r.mse);
            let kl: Vec<f64> = rs.iter().filter_map(|r| r.kl).collect();
            let first = rs[0];
            Aggregate {
                scenario: first.scenario,
                n_train: first.n_train,
                shift: first.shift,
                method: first.method,
                count: ok.len(),
                failed: rs.len() - ok.len(),
                bias_mean: mean(&bias),
                bias_median: quantile(&bias, 0.5),
                bias_q1: quantile(&bias, 0.25),
                bias_q3: quantile(&bias, 0.75),
                mse_mean: mean(&mse),
                mse_median: quantile(&mse, 0.5),
                mse_q1: quantile(&mse, 0.25),
                mse_q3: quantile(&mse, 0.75),
                kl_mean: mean(&kl),
            }
        })
        .collect()
}

/// Table layout: one row per (n_train, shift), one column per method.
pub fn pivot(aggregates: &[Aggregate], metric: &str) -> Result<String> {
    let mut methods: Vec<Method> = aggregates.iter().map(|a| a.method).collect();
    methods.sort();
    methods.dedup();
    let mut rows: BTreeMap<(usize, u64), (Option<f64>, BTreeMap<Method, Option<f64>>)> = BTreeMap::new();
    for a in aggregates {
        let row = rows.entry((a.n_train, a.shift.to_bits())).or_default();
        row.0 = row.0.or(a.kl_mean);
        row.1.insert(a.method, a.metric(metric)?);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["n_train".to_string(), "shift".into(), "kl".into()];
    header.extend(methods.iter().map(|m| m.label().to_string()));
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(&header).map_err(fmt)?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for ((n, shift), (kl, vals)) in rows {
        let mut line = vec![n.to_string(), f64::from_bits(shift).to_string(), cell(kl)];
        line.extend(methods.iter().map(|m| cell(vals.get(m).copied().flatten())));
        w.write_record(&line).map_err(fmt)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Serialize)]
struct Timing {
    scenario: ScenarioId,
    n_train: usize,
    shift: f64,
    method: Method,
    rep: usize,
    seconds: f64,
}

/// `records.csv`, `aggregates.csv` and `config.resolved` depend only on the
/// configuration; wall times go to `timings.csv`.
pub fn write_results(dir: impl AsRef<Path>, result: &ExperimentResult) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_csv(&dir.join("records.csv"), &result.records)?;
    write_csv(&dir.join("aggregates.csv"), &result.aggregates)?;
    let timings: Vec<Timing> = result
        .records
        .iter()
        .map(|r| Timing {
            scenario: r.scenario,
            n_train: r.n_train,
            shift: r.shift,
            method: r.method,
            rep: r.rep,
            seconds: r.seconds,
        })
        .collect();
    write_csv(&dir.join("timings.csv"), &timings)?;
    let cfg = dir.join("config.resolved");
    fs::write(&cfg, result.config.to_toml()?).map_err(io_err(&cfg))?;
    Ok(())
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<Record>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row.map_err(csv_err(path))?);
    }
    Ok(out)
}
