//! The four simulation designs.
//!
//! All designs draw `X ~ N(0, Σ)` in ten dimensions with Σ from a C-vine
//! random correlation matrix, share the noise draw between the two potential
//! outcomes, and produce shifted or trial populations by weighted sampling
//! without replacement from a pool ten times the requested size.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::logistic::sigmoid;
use crate::rng::{child_rng, label_key, weighted_sample_without_replacement, Rng};
use crate::tabular::{Dataset, Truth};

pub const DIM: usize = 10;
pub const VINE_ALPHA: f64 = 0.1;
pub const POOL_FACTOR: usize = 10;
/// Smallest eigenvalue accepted from the vine before shrinking.
pub const MIN_EIGENVALUE: f64 = 1e-8;
/// Mode of the Beta(2, 4) density, attained at x = 1/4.
pub const BETA24_MAX: f64 = 2.109375;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    Sim1a,
    Sim1b,
    Sim2a,
    Sim2b,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 4] = [ScenarioId::Sim1a, ScenarioId::Sim1b, ScenarioId::Sim2a, ScenarioId::Sim2b];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::Sim1a => "sim1a",
            ScenarioId::Sim1b => "sim1b",
            ScenarioId::Sim2a => "sim2a",
            ScenarioId::Sim2b => "sim2b",
        }
    }

    /// Designs with a randomized trial as the second data source.
    pub fn has_rct(self) -> bool {
        matches!(self, ScenarioId::Sim2a | ScenarioId::Sim2b)
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario '{s}' (expected sim1a, sim1b, sim2a or sim2b)")))
    }
}

/// How the propensity term `B(x1; 2, 4)` of sim 1a is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaReading {
    /// Density at `clamp(x1, 0, 1)` divided by its maximum, so `e ∈ [0.25, 0.5]`.
    #[default]
    ScaledDensity,
    /// Unscaled density, `e ∈ [0.25, 0.78]`.
    RawDensity,
    /// Distribution function, `e ∈ [0.25, 0.5]`.
    Cdf,
}

impl BetaReading {
    pub fn eval(self, x1: f64) -> f64 {
        let x = x1.clamp(0.0, 1.0);
        match self {
            BetaReading::ScaledDensity => beta24_pdf(x) / BETA24_MAX,
            BetaReading::RawDensity => beta24_pdf(x),
            BetaReading::Cdf => 1.0 - (1.0 - x).powi(5) - 5.0 * x * (1.0 - x).powi(4),
        }
    }
}

fn beta24_pdf(x: f64) -> f64 {
    20.0 * x * (1.0 - x).powi(3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "shift", rename_all = "snake_case")]
pub enum Population {
    Observational,
    /// Observational design resampled with shift weights of intensity `s`.
    Shifted(f64),
    /// Randomized trial (`e = 0.5`) resampled with shift weights.
    Rct(f64),
}

impl Population {
    pub fn parse(kind: &str, shift: f64) -> Result<Self> {
        match kind {
            "observational" | "obs" => Ok(Population::Observational),
            "shifted" => Ok(Population::Shifted(shift)),
            "rct" => Ok(Population::Rct(shift)),
            other => Err(Error::InvalidArgument(format!(
                "unknown population '{other}' (expected observational, shifted or rct)"
            ))),
        }
    }

    fn shift(self) -> Option<f64> {
        match self {
            Population::Observational => None,
            Population::Shifted(s) | Population::Rct(s) => Some(s),
        }
    }
}

/// Random correlation matrix by the C-vine method: partial correlations at
/// tree level `k` are `2·Beta(b_k, b_k) - 1` with `b_k = alpha + (d - 1)/2 - k/2`,
/// mapped to correlations and symmetrically permuted. When the smallest
/// eigenvalue is below `1e-8` the matrix is shrunk towards the identity and
/// the returned flag is set.
pub fn gen_correlation(d: usize, alpha: f64, rng: &mut Rng) -> Result<(Array2<f64>, bool)> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("vine alpha must be > 0, got {alpha}")));
    }
    let mut partial = Array2::<f64>::zeros((d, d));
    let mut corr = Array2::<f64>::eye(d);
    let mut b = alpha + (d as f64 - 1.0) / 2.0;
    for k in 0..d.saturating_sub(1) {
        b -= 0.5;
        let beta = Beta::new(b, b).map_err(|e| Error::InvalidArgument(format!("vine beta({b}): {e}")))?;
        for i in k + 1..d {
            let pk = 2.0 * beta.sample(rng) - 1.0;
            partial[[k, i]] = pk;
            let mut p = pk;
            for l in (0..k).rev() {
                p = p * ((1.0 - partial[[l, i]].powi(2)) * (1.0 - partial[[l, k]].powi(2))).sqrt()
                    + partial[[l, i]] * partial[[l, k]];
            }
            corr[[k, i]] = p;
            corr[[i, k]] = p;
        }
    }
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(rng);
    let mut out = Array2::from_shape_fn((d, d), |(i, j)| corr[[perm[i], perm[j]]]);
    // Deep vine levels with small alpha push partial correlations to ±1, so
    // the matrix can be numerically singular. Shrink towards I just enough.
    let m = DMatrix::from_fn(d, d, |i, j| out[[i, j]]);
    let min_eig = m.symmetric_eigenvalues().min();
    let jittered = min_eig < MIN_EIGENVALUE;
    if jittered {
        let delta = 10.0 * MIN_EIGENVALUE - min_eig;
        out.mapv_inplace(|v| v / (1.0 + delta));
        for i in 0..d {
            out[[i, i]] = 1.0;
        }
    }
    if cholesky_lower(&out).is_none() {
        return Err(Error::SingularCovariance);
    }
    Ok((out, jittered))
}

fn cholesky_lower(a: &Array2<f64>) -> Option<Array2<f64>> {
    let d = a.nrows();
    let m = DMatrix::from_fn(d, d, |i, j| a[[i, j]]);
    let l = m.cholesky()?.l();
    Some(Array2::from_shape_fn((d, d), |(i, j)| l[(i, j)]))
}

/// One draw of a simulation design: correlation matrix and coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: ScenarioId,
    pub sigma: Array2<f64>,
    chol: Array2<f64>,
    /// `β` of sim 1b's effect `x'β`.
    pub beta: Array1<f64>,
    /// `β_l, β_m, β_u` of sim 1a's piecewise control mean.
    pub beta_pieces: [Array1<f64>; 3],
    pub beta_reading: BetaReading,
    pub seed: u64,
    /// The correlation matrix needed diagonal jitter.
    pub jittered: bool,
}

impl Scenario {
    pub fn new(id: ScenarioId, seed: u64) -> Result<Self> {
        let mut rng = child_rng(seed, &[label_key(id.as_str()), label_key("sigma")]);
        let (sigma, jittered) = gen_correlation(DIM, VINE_ALPHA, &mut rng)?;
        if jittered {
            log::warn!("{id}: correlation matrix needed jitter (seed {seed})");
        }
        let chol = cholesky_lower(&sigma).ok_or(Error::SingularCovariance)?;
        let mut crng = child_rng(seed, &[label_key(id.as_str()), label_key("coefficients")]);
        let mut unif = || Array1::from_iter((0..DIM).map(|_| crng.random_range(-5.0..=5.0)));
        let beta_pieces = [unif(), unif(), unif()];
        let beta = unif();
        Ok(Scenario {
            id,
            sigma,
            chol,
            beta,
            beta_pieces,
            beta_reading: BetaReading::default(),
            seed,
            jittered,
        })
    }

    pub fn with_beta_reading(mut self, reading: BetaReading) -> Self {
        self.beta_reading = reading;
        self
    }

    /// Conditional means `(μ0(x), μ1(x))` without the confounder.
    pub fn means(&self, x: ArrayView1<'_, f64>) -> (f64, f64) {
        let base = 3.0 * x[0] + 5.0 * x[1];
        match self.id {
            ScenarioId::Sim1a => {
                let piece = if x[9] < -0.4 {
                    0
                } else if x[9] <= 0.4 {
                    1
                } else {
                    2
                };
                let mu0 = x.dot(&self.beta_pieces[piece]);
                (mu0, mu0 + base)
            }
            ScenarioId::Sim1b => (base, base + x.dot(&self.beta)),
            ScenarioId::Sim2a | ScenarioId::Sim2b => (base, 2.0 * base),
        }
    }

    /// Observational propensity; `u` is the realised confounder (2a/2b).
    pub fn propensity(&self, x: ArrayView1<'_, f64>, u: f64) -> f64 {
        match self.id {
            ScenarioId::Sim1a => 0.25 * (1.0 + self.beta_reading.eval(x[0])),
            ScenarioId::Sim1b => sigmoid(2.0 + 2.0 * (x[0] - 0.5) + (x[1] - 0.5)),
            ScenarioId::Sim2a | ScenarioId::Sim2b => sigmoid(-2.0 + 3.0 * u + 2.0 * (x[0] - 0.5) + (x[1] - 0.5)),
        }
    }

    /// `logit z(x)`, so the shift weight is `exp(s · logit z(x))`.
    pub fn shift_log_odds(&self, x: ArrayView1<'_, f64>) -> f64 {
        match self.id {
            ScenarioId::Sim1a => (x[0] - 0.5) + 2.0 * (x[1] - 0.5) + 0.5 * (x[0] * x[1] - 0.5),
            _ => -(2.0 * (x[1] - 0.5) + (x[2] - 0.5)),
        }
    }

    pub fn shift_z(&self, x: ArrayView1<'_, f64>) -> f64 {
        sigmoid(self.shift_log_odds(x))
    }

    /// Covariate pool of `n` rows.
    pub fn draw_x(&self, n: usize, rng: &mut Rng) -> Array2<f64> {
        let z = Array2::from_shape_fn((n, DIM), |_| rng.sample::<f64, _>(StandardNormal));
        z.dot(&self.chol.t())
    }

    fn check_population(&self, population: Population) -> Result<()> {
        match (population, self.id.has_rct()) {
            (Population::Shifted(_), true) => Err(Error::InvalidArgument(format!(
                "{} has no shifted observational population; use rct",
                self.id
            ))),
            (Population::Rct(_), false) => Err(Error::InvalidArgument(format!(
                "{} has no randomized trial; use shifted",
                self.id
            ))),
            _ => match population.shift() {
                Some(s) if !(s.is_finite() && s >= 0.0) => {
                    Err(Error::InvalidArgument(format!("shift intensity {s} must be >= 0")))
                }
                _ => Ok(()),
            },
        }
    }
}

pub fn feature_names() -> Vec<String> {
    (1..=DIM).map(|j| format!("x{j}")).collect()
}

/// Draw `n` rows from `population`. The result carries truth columns: the
/// effect `tau` (marginalised over the confounder), both potential outcomes,
/// the propensity and, for 2a/2b, the realised confounder.
pub fn simulate(scn: &Scenario, n: usize, population: Population, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    scn.check_population(population)?;
    let key = |name: &str| child_rng(seed, &[label_key(name)]);

    let pool_n = if population.shift().is_some() { POOL_FACTOR * n } else { n };
    let pool = scn.draw_x(pool_n, &mut key("x"));
    let x1_bar = pool.column(0).mean().expect("non-empty pool");
    let x = match population.shift() {
        Some(s) => {
            let logw: Vec<f64> = pool.rows().into_iter().map(|r| s * scn.shift_log_odds(r)).collect();
            let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
            let rows = weighted_sample_without_replacement(&w, n, &mut key("select"))?;
            pool.select(Axis(0), &rows)
        }
        None => pool,
    };

    let mut urng = key("u");
    let mut trng = key("t");
    let mut erng = key("noise");
    let rct = matches!(population, Population::Rct(_));
    let confounded = scn.id.has_rct();
    let (mut t, mut y) = (Array1::<u8>::zeros(n), Array1::<f64>::zeros(n));
    let (mut y0, mut y1) = (Array1::<f64>::zeros(n), Array1::<f64>::zeros(n));
    let (mut tau, mut e) = (Array1::<f64>::zeros(n), Array1::<f64>::zeros(n));
    let mut u_col = Array1::<f64>::zeros(n);
    for (i, row) in x.rows().into_iter().enumerate() {
        let (mu0, mu1) = scn.means(row);
        let u_prob = if row[0] > x1_bar { 0.8 } else { 0.2 };
        let u = if confounded && urng.random::<f64>() < u_prob { 1.0 } else { 0.0 };
        let p = if rct { 0.5 } else { scn.propensity(row, u) };
        let ti = u8::from(trng.random::<f64>() < p);
        let eps: f64 = erng.sample(StandardNormal);
        // the trial in 2b is free of the confounder's outcome effect
        let u_effect = confounded && !(rct && scn.id == ScenarioId::Sim2b);
        let (m0, m1) = if u_effect { (mu0 - u, mu1 + 3.0 * u) } else { (mu0, mu1) };
        y0[i] = m0 + eps;
        y1[i] = m1 + eps;
        y[i] = if ti == 1 { y1[i] } else { y0[i] };
        t[i] = ti;
        e[i] = p;
        u_col[i] = u;
        tau[i] = match scn.id {
            ScenarioId::Sim2a => mu1 - mu0 + 4.0 * u_prob,
            _ => mu1 - mu0,
        };
    }
    let truth = Truth {
        tau: Some(tau),
        y0: Some(y0),
        y1: Some(y1),
        e: Some(e),
        u: confounded.then_some(u_col),
    };
    Dataset::new(x, y)?
        .with_feature_names(feature_names())?
        .with_treatment(t)?
        .with_truth(truth)
}

/// `n` rows of `pool` drawn without replacement with inclusion driven by
/// `weights` (Efraimidis–Spirakis keys).
pub fn weighted_subsample(pool: &Dataset, weights: ArrayView1<'_, f64>, n: usize, seed: u64) -> Result<Dataset> {
    if weights.len() != pool.n() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for a pool of {} rows",
            weights.len(),
            pool.n()
        )));
    }
    if n > pool.n() {
        return Err(Error::InvalidArgument(format!("cannot draw {n} rows from a pool of {}", pool.n())));
    }
    let rows = weighted_sample_without_replacement(&weights.to_vec(), n, &mut crate::rng::rng_from_seed(seed))?;
    Ok(pool.select(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn min_eigenvalue(a: &Array2<f64>) -> f64 {
        let d = a.nrows();
        let m = DMatrix::from_fn(d, d, |i, j| a[[i, j]]);
        m.symmetric_eigenvalues().min()
    }

    #[test]
    fn scalar_correlation() {
        let (c, _) = gen_correlation(1, 0.1, &mut rng_from_seed(0)).unwrap();
        assert_eq!(c, Array2::<f64>::eye(1));
    }

    #[test]
    fn correlations_are_valid_over_many_seeds() {
        for seed in 0..100 {
            let (c, _) = gen_correlation(10, VINE_ALPHA, &mut rng_from_seed(seed)).unwrap();
            for i in 0..10 {
                assert!((c[[i, i]] - 1.0).abs() < 1e-12);
                for j in 0..10 {
                    assert_eq!(c[[i, j]], c[[j, i]]);
                }
            }
            assert!(min_eigenvalue(&c) > 0.5 * MIN_EIGENVALUE);
        }
    }

    /// Realised band over 1000 seeds: mean |r| off the diagonal has median
    /// about 0.27 and central 95% range about 0.22 to 0.33.
    #[test]
    fn off_diagonal_correlations_are_modest() {
        let mut means: Vec<f64> = (0..1000)
            .map(|seed| {
                let (c, _) = gen_correlation(10, VINE_ALPHA, &mut rng_from_seed(seed)).unwrap();
                (c.mapv(f64::abs).sum() - 10.0) / 90.0
            })
            .collect();
        means.sort_by(f64::total_cmp);
        assert!((0.22..0.32).contains(&means[500]), "{}", means[500]);
        assert!(means[25] > 0.15 && means[975] < 0.45);
    }

    #[test]
    fn beta_readings() {
        assert!((BetaReading::RawDensity.eval(0.25) - BETA24_MAX).abs() < 1e-15);
        assert_eq!(BetaReading::ScaledDensity.eval(0.25), 1.0);
        assert_eq!(BetaReading::ScaledDensity.eval(-1.0), 0.0);
        assert!((BetaReading::Cdf.eval(1.0) - 1.0).abs() < 1e-15);
        // numerical integral of the density matches the closed-form cdf
        let m = 100_000;
        let h = 0.4 / m as f64;
        let integral: f64 = (0..m).map(|k| beta24_pdf((k as f64 + 0.5) * h) * h).sum();
        assert!((integral - BetaReading::Cdf.eval(0.4)).abs() < 1e-9);
    }

    #[test]
    fn invalid_population_combinations() {
        let s1 = Scenario::new(ScenarioId::Sim1a, 1).unwrap();
        let s2 = Scenario::new(ScenarioId::Sim2a, 1).unwrap();
        assert!(simulate(&s1, 10, Population::Rct(0.0), 1).is_err());
        assert!(simulate(&s2, 10, Population::Shifted(1.0), 1).is_err());
        assert!(simulate(&s1, 10, Population::Shifted(-1.0), 1).is_err());
        assert!(simulate(&s1, 0, Population::Observational, 1).is_err());
    }

    #[test]
    fn same_seed_same_data() {
        let scn = Scenario::new(ScenarioId::Sim2b, 4).unwrap();
        let a = simulate(&scn, 200, Population::Rct(1.0), 9).unwrap();
        let b = simulate(&scn, 200, Population::Rct(1.0), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn observed_outcome_is_the_selected_potential_outcome() {
        for id in ScenarioId::ALL {
            let scn = Scenario::new(id, 2).unwrap();
            let d = simulate(&scn, 300, Population::Observational, 3).unwrap();
            let truth = d.truth().unwrap();
            let (y0, y1) = (truth.y0.as_ref().unwrap(), truth.y1.as_ref().unwrap());
            let t = d.treatment().unwrap();
            for i in 0..d.n() {
                assert_eq!(d.y()[i], if t[i] == 1 { y1[i] } else { y0[i] });
            }
            assert!(truth.e.as_ref().unwrap().iter().all(|&e| e > 0.0 && e < 1.0));
        }
    }

    #[test]
    fn sim1a_propensity_range() {
        let scn = Scenario::new(ScenarioId::Sim1a, 5).unwrap();
        let d = simulate(&scn, 20_000, Population::Observational, 1).unwrap();
        let e = d.truth().unwrap().e.as_ref().unwrap();
        assert!(e.iter().all(|&v| (0.25..=0.5).contains(&v)));
        let raw = scn.clone().with_beta_reading(BetaReading::RawDensity);
        let d = simulate(&raw, 20_000, Population::Observational, 1).unwrap();
        let top = 0.25 * (1.0 + BETA24_MAX);
        assert!(d.truth().unwrap().e.as_ref().unwrap().iter().all(|&v| (0.25..=top).contains(&v)));
    }

    #[test]
    fn sim2a_effect_offsets_are_keyed_on_x1() {
        let scn = Scenario::new(ScenarioId::Sim2a, 6).unwrap();
        let d = simulate(&scn, 500, Population::Observational, 2).unwrap();
        let tau = d.truth_tau().unwrap();
        let x1_bar = d.x().column(0).mean().unwrap();
        for (i, row) in d.x().rows().into_iter().enumerate() {
            let offset = tau[i] - (3.0 * row[0] + 5.0 * row[1]);
            let expected = if row[0] > x1_bar { 3.2 } else { 0.8 };
            assert!((offset - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_weights_agree_with_the_z_form() {
        let scn = Scenario::new(ScenarioId::Sim1b, 7).unwrap();
        let x = scn.draw_x(50, &mut rng_from_seed(1));
        let spec = crate::shift::ShiftSpec::new(
            |r: &[f64]| scn.shift_z(ArrayView1::from(r)),
            1.5,
        );
        let w = crate::shift::shift_weights(x.view(), &spec).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            let direct = (1.5 * scn.shift_log_odds(row)).exp();
            assert!((w[i] - direct).abs() <= 1e-9 * direct);
        }
    }

    #[test]
    fn weighted_subsample_contracts() {
        let x = Array2::from_shape_fn((100, 1), |(i, _)| i as f64);
        let pool = Dataset::new(x, Array1::zeros(100)).unwrap();
        let mut w = Array1::zeros(100);
        w[42] = 1.0;
        let one = weighted_subsample(&pool, w.view(), 1, 3).unwrap();
        assert_eq!(one.x()[[0, 0]], 42.0);
        assert!(weighted_subsample(&pool, Array1::ones(100).view(), 101, 3).is_err());
    }

    #[test]
    fn exponential_weights_raise_the_sample_mean() {
        let scn = Scenario::new(ScenarioId::Sim1b, 8).unwrap();
        let x = scn.draw_x(5000, &mut rng_from_seed(2));
        let pool = Dataset::new(x.clone(), Array1::zeros(5000)).unwrap();
        let w = x.column(1).mapv(f64::exp);
        // Monte Carlo reference: the same draw repeated over seeds
        let means: Vec<f64> = (0..20)
            .map(|s| weighted_subsample(&pool, w.view(), 500, s).unwrap().x().column(1).mean().unwrap())
            .collect();
        let pool_mean = x.column(1).mean().unwrap();
        let avg = means.iter().sum::<f64>() / means.len() as f64;
        assert!(avg > pool_mean + 0.5, "{avg} vs {pool_mean}");
        assert!(means.iter().all(|m| *m > pool_mean));
    }
}
