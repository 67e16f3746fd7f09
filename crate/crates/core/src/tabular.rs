//! Dataset representation, CSV ingestion, splitting and outcome scaling.

use std::fs::File;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub const TRUTH_PREFIX: &str = "truth_";

/// Ground-truth columns carried by simulated data.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Truth {
    pub tau: Option<Array1<f64>>,
    pub y0: Option<Array1<f64>>,
    pub y1: Option<Array1<f64>>,
    pub e: Option<Array1<f64>>,
    pub u: Option<Array1<f64>>,
}

impl Truth {
    fn columns(&self) -> Vec<(&'static str, &Array1<f64>)> {
        [
            ("tau", &self.tau),
            ("y0", &self.y0),
            ("y1", &self.y1),
            ("e", &self.e),
            ("u", &self.u),
        ]
        .into_iter()
        .filter_map(|(name, col)| col.as_ref().map(|c| (name, c)))
        .collect()
    }

    fn select(&self, rows: &[usize]) -> Truth {
        let pick = |c: &Option<Array1<f64>>| c.as_ref().map(|c| c.select(Axis(0), rows));
        Truth {
            tau: pick(&self.tau),
            y0: pick(&self.y0),
            y1: pick(&self.y1),
            e: pick(&self.e),
            u: pick(&self.u),
        }
    }

    fn is_empty(&self) -> bool {
        self.columns().is_empty()
    }
}

/// Rows of covariates, optional binary treatment, outcome, optional weights
/// and optional simulation truth. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    x: Array2<f64>,
    t: Option<Array1<u8>>,
    y: Array1<f64>,
    weights: Option<Array1<f64>>,
    truth: Option<Truth>,
}

impl Dataset {
    /// Build a dataset from covariates and outcomes. Features are named
    /// `x1..xd` until renamed.
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::InvalidData("dataset has no rows".into()));
        }
        if y.len() != n {
            return Err(Error::InvalidData(format!(
                "outcome length {} differs from row count {n}",
                y.len()
            )));
        }
        let feature_names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Ok(Dataset {
            feature_names,
            x,
            t: None,
            y,
            weights: None,
            truth: None,
        })
    }

    pub fn with_treatment(mut self, t: Array1<u8>) -> Result<Self> {
        self.check_len("treatment", t.len())?;
        if let Some((row, &v)) = t.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(Error::InvalidTreatment {
                row,
                value: v as f64,
            });
        }
        self.t = Some(t);
        Ok(self)
    }

    pub fn with_weights(mut self, w: Array1<f64>) -> Result<Self> {
        self.check_len("weights", w.len())?;
        validate_weights(w.view())?;
        self.weights = Some(w);
        Ok(self)
    }

    pub fn without_weights(mut self) -> Self {
        self.weights = None;
        self
    }

    pub fn with_truth(mut self, truth: Truth) -> Result<Self> {
        for (name, col) in truth.columns() {
            self.check_len(name, col.len())?;
        }
        self.truth = if truth.is_empty() { None } else { Some(truth) };
        Ok(self)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d() {
            return Err(Error::InvalidData(format!(
                "{} feature names for {} columns",
                names.len(),
                self.d()
            )));
        }
        self.feature_names = names;
        Ok(self)
    }

    /// Same rows with a different outcome vector.
    pub fn with_outcome(&self, y: Array1<f64>) -> Result<Self> {
        self.check_len("outcome", y.len())?;
        Ok(Dataset { y, ..self.clone() })
    }

    fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::InvalidData(format!(
                "{what} length {len} differs from row count {}",
                self.n()
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn t(&self) -> Option<ArrayView1<'_, u8>> {
        self.t.as_ref().map(|t| t.view())
    }

    /// Treatment column, or an error when the dataset has none.
    pub fn treatment(&self) -> Result<ArrayView1<'_, u8>> {
        self.t()
            .ok_or_else(|| Error::InvalidData("dataset has no treatment column".into()))
    }

    pub fn weights(&self) -> Option<ArrayView1<'_, f64>> {
        self.weights.as_ref().map(|w| w.view())
    }

    pub fn truth(&self) -> Option<&Truth> {
        self.truth.as_ref()
    }

    pub fn truth_tau(&self) -> Result<ArrayView1<'_, f64>> {
        self.truth
            .as_ref()
            .and_then(|t| t.tau.as_ref())
            .map(|c| c.view())
            .ok_or_else(|| Error::InvalidData("dataset carries no truth_tau column".into()))
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Rows in the given order (duplicates allowed).
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            x: self.x.select(Axis(0), rows),
            t: self.t.as_ref().map(|t| t.select(Axis(0), rows)),
            y: self.y.select(Axis(0), rows),
            weights: self.weights.as_ref().map(|w| w.select(Axis(0), rows)),
            truth: self.truth.as_ref().map(|t| t.select(rows)),
        }
    }

    /// Row indices with treatment `arm`.
    pub fn arm_indices(&self, arm: u8) -> Result<Vec<usize>> {
        let t = self.treatment()?;
        Ok(t.iter()
            .enumerate()
            .filter(|(_, &v)| v == arm)
            .map(|(i, _)| i)
            .collect())
    }

    /// Subset with treatment `arm`; errors when that arm is empty.
    pub fn arm(&self, arm: u8) -> Result<Dataset> {
        let rows = self.arm_indices(arm)?;
        if rows.is_empty() {
            return Err(Error::EmptyArm(arm));
        }
        Ok(self.select(&rows))
    }

    pub fn mean_y(&self) -> f64 {
        self.y.mean().unwrap_or(0.0)
    }

    pub fn weighted_mean_y(&self) -> f64 {
        match &self.weights {
            Some(w) => w.dot(&self.y) / w.sum(),
            None => self.mean_y(),
        }
    }

    /// Stack rows of two datasets with the same covariate dimension. Optional
    /// columns survive only when both sides carry them.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.d() != other.d() {
            return Err(Error::InvalidData(format!(
                "cannot stack d={} with d={}",
                self.d(),
                other.d()
            )));
        }
        let both = |a: &Option<Array1<f64>>, b: &Option<Array1<f64>>| match (a, b) {
            (Some(a), Some(b)) => Some(ndarray::concatenate![Axis(0), *a, *b]),
            _ => None,
        };
        let truth = match (&self.truth, &other.truth) {
            (Some(a), Some(b)) => Some(Truth {
                tau: both(&a.tau, &b.tau),
                y0: both(&a.y0, &b.y0),
                y1: both(&a.y1, &b.y1),
                e: both(&a.e, &b.e),
                u: both(&a.u, &b.u),
            }),
            _ => None,
        };
        Ok(Dataset {
            feature_names: self.feature_names.clone(),
            x: ndarray::concatenate![Axis(0), self.x, other.x],
            t: match (&self.t, &other.t) {
                (Some(a), Some(b)) => Some(ndarray::concatenate![Axis(0), *a, *b]),
                _ => None,
            },
            y: ndarray::concatenate![Axis(0), self.y, other.y],
            weights: both(&self.weights, &other.weights),
            truth,
        })
    }
}

fn validate_weights(w: ArrayView1<'_, f64>) -> Result<()> {
    if let Some(i) = w.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidData(format!(
            "weight at row {i} is {}: weights must be finite and >= 0",
            w[i]
        )));
    }
    if !w.iter().any(|v| *v > 0.0) {
        return Err(Error::InvalidData("all weights are zero".into()));
    }
    Ok(())
}

/// Column-name mapping for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    /// Feature columns in order. Empty means "every column not claimed by
    /// another role and not prefixed `truth_`".
    #[serde(default)]
    pub features: Vec<String>,
    #[serde(default)]
    pub treatment: Option<String>,
    pub outcome: String,
    #[serde(default)]
    pub weights: Option<String>,
    /// Read `truth_*` columns when present.
    #[serde(default = "default_true")]
    pub truth: bool,
}

fn default_true() -> bool {
    true
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            features: Vec::new(),
            treatment: Some("t".into()),
            outcome: "y".into(),
            weights: None,
            truth: true,
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let message = match e.position() {
        Some(pos) => format!("line {}: {e}", pos.line()),
        None => e.to_string(),
    };
    Error::Csv {
        path: path.to_path_buf(),
        message,
    }
}

/// Read a header-first, comma-separated UTF-8 file.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let index_of = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };

    let claimed: Vec<&str> = [Some(schema.outcome.as_str()), schema.treatment.as_deref(), schema.weights.as_deref()]
        .into_iter()
        .flatten()
        .collect();
    let features: Vec<String> = if schema.features.is_empty() {
        headers
            .iter()
            .filter(|h| !claimed.contains(&h.as_str()) && !h.starts_with(TRUTH_PREFIX))
            .cloned()
            .collect()
    } else {
        schema.features.clone()
    };
    let feature_idx = features.iter().map(|f| index_of(f)).collect::<Result<Vec<_>>>()?;
    let y_idx = index_of(&schema.outcome)?;
    let t_idx = schema.treatment.as_deref().map(index_of).transpose()?;
    let w_idx = schema.weights.as_deref().map(index_of).transpose()?;
    let truth_names = ["tau", "y0", "y1", "e", "u"];
    let truth_idx: Vec<Option<usize>> = truth_names
        .iter()
        .map(|name| {
            let col = format!("{TRUTH_PREFIX}{name}");
            if schema.truth {
                headers.iter().position(|h| *h == col)
            } else {
                None
            }
        })
        .collect();

    let d = features.len();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ts = Vec::new();
    let mut ws = Vec::new();
    let mut truth_cols: Vec<Vec<f64>> = vec![Vec::new(); truth_names.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let cell = |idx: usize| -> Result<f64> {
            let raw = record.get(idx).unwrap_or("").trim();
            raw.parse::<f64>().map_err(|_| Error::Cell {
                row: row + 1,
                column: headers[idx].clone(),
                message: format!("non-numeric value '{raw}'"),
            })
        };
        for &j in &feature_idx {
            xs.push(cell(j)?);
        }
        ys.push(cell(y_idx)?);
        if let Some(j) = t_idx {
            let v = cell(j)?;
            if v != 0.0 && v != 1.0 {
                return Err(Error::InvalidTreatment { row: row + 1, value: v });
            }
            ts.push(v as u8);
        }
        if let Some(j) = w_idx {
            ws.push(cell(j)?);
        }
        for (k, idx) in truth_idx.iter().enumerate() {
            if let Some(j) = idx {
                truth_cols[k].push(cell(*j)?);
            }
        }
    }
    let n = ys.len();
    if n == 0 {
        return Err(Error::InvalidData(format!("{}: no data rows", path.display())));
    }
    let x = Array2::from_shape_vec((n, d), xs).map_err(|e| Error::InvalidData(e.to_string()))?;
    let mut data = Dataset::new(x, Array1::from(ys))?.with_feature_names(features)?;
    if t_idx.is_some() {
        data = data.with_treatment(Array1::from(ts))?;
    }
    if w_idx.is_some() {
        data = data.with_weights(Array1::from(ws))?;
    }
    let mut cols = truth_cols.into_iter().map(|c| (!c.is_empty()).then(|| Array1::from(c)));
    let truth = Truth {
        tau: cols.next().flatten(),
        y0: cols.next().flatten(),
        y1: cols.next().flatten(),
        e: cols.next().flatten(),
        u: cols.next().flatten(),
    };
    data.with_truth(truth)
}

/// Only the named columns, in order; for scoring files without outcomes.
pub fn load_features(path: impl AsRef<Path>, features: &[String]) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let idx = features
        .iter()
        .map(|f| {
            headers
                .iter()
                .position(|h| h == f)
                .ok_or_else(|| Error::MissingColumn(f.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut xs = Vec::new();
    let mut n = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        for &j in &idx {
            let raw = record.get(j).unwrap_or("").trim();
            xs.push(raw.parse::<f64>().map_err(|_| Error::Cell {
                row: row + 1,
                column: headers[j].clone(),
                message: format!("non-numeric value '{raw}'"),
            })?);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidData(format!("{}: no data rows", path.display())));
    }
    Array2::from_shape_vec((n, features.len()), xs).map_err(|e| Error::InvalidData(e.to_string()))
}

/// Write features, `t`, `y`, `weight` and `truth_*` columns.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv_to(data, file).map_err(|e| csv_error(path, e))
}

pub fn write_csv_to<W: std::io::Write>(data: &Dataset, w: W) -> std::result::Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(w);
    let truth_cols = data.truth.as_ref().map(|t| t.columns()).unwrap_or_default();
    let mut header: Vec<String> = data.feature_names.clone();
    if data.t.is_some() {
        header.push("t".into());
    }
    header.push("y".into());
    if data.weights.is_some() {
        header.push("weight".into());
    }
    header.extend(truth_cols.iter().map(|(n, _)| format!("{TRUTH_PREFIX}{n}")));
    writer.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for i in 0..data.n() {
        record.clear();
        record.extend(data.x.row(i).iter().map(|v| v.to_string()));
        if let Some(t) = &data.t {
            record.push(t[i].to_string());
        }
        record.push(data.y[i].to_string());
        if let Some(w) = &data.weights {
            record.push(w[i].to_string());
        }
        record.extend(truth_cols.iter().map(|(_, c)| c[i].to_string()));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Part sizes by largest remainder; ties go to the earlier part.
fn part_sizes(n: usize, fractions: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

/// Shuffle rows with `seed` and cut them into parts of the given shares.
pub fn split(data: &Dataset, fractions: &[f64], seed: u64) -> Result<Vec<Dataset>> {
    if fractions.is_empty() || fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::InvalidArgument(
            "split fractions must be positive".into(),
        ));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions sum to {total}, not 1"
        )));
    }
    let n = data.n();
    if n < fractions.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} rows into {} parts",
            fractions.len()
        )));
    }
    let sizes = part_sizes(n, fractions);
    if sizes.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "split of {n} rows by {fractions:?} leaves an empty part"
        )));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng_from_seed(seed));
    let mut parts = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for size in sizes {
        parts.push(data.select(&rows[start..start + size]));
        start += size;
    }
    Ok(parts)
}

/// Affine map of outcomes onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeScaler {
    pub lo: f64,
    pub hi: f64,
}

impl OutcomeScaler {
    /// Bounds from the empirical range; a constant sample gets `hi = lo + 1`
    /// centred on the value.
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a f64>) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut any = false;
        for &v in values {
            if !v.is_finite() {
                return Err(Error::NonFinite("outcome".into()));
            }
            lo = lo.min(v);
            hi = hi.max(v);
            any = true;
        }
        if !any {
            return Err(Error::InvalidData("no outcomes to scale".into()));
        }
        if hi > lo {
            Ok(OutcomeScaler { lo, hi })
        } else {
            Ok(OutcomeScaler {
                lo: lo - 0.5,
                hi: lo + 0.5,
            })
        }
    }

    pub fn range(&self) -> f64 {
        self.hi - self.lo
    }

    /// Scaled value, clamped into `[0, 1]`.
    pub fn transform(&self, y: f64) -> f64 {
        ((y - self.lo) / self.range()).clamp(0.0, 1.0)
    }

    pub fn inverse(&self, s: f64) -> f64 {
        self.lo + s * self.range()
    }
}

/// Scale outcomes to `[0, 1]` using the dataset's own range.
pub fn scale_outcomes(data: &Dataset) -> Result<(Dataset, OutcomeScaler)> {
    let scaler = OutcomeScaler::fit(data.y().iter())?;
    let scaled = data.y().mapv(|v| scaler.transform(v));
    Ok((data.with_outcome(scaled)?, scaler))
}
