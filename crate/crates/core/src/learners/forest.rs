use ndarray::{ArrayView1, ArrayView2};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, FeatureSampler, TreeModel};
use crate::error::{Error, Result};
use crate::rng::{child_rng, weighted_sample_without_replacement};

/// Bagging hyperparameters. Defaults follow the reference ranger setup:
/// 500 trees, `mtry = ⌈√d⌉`, minimum node size 5, bootstrap of size `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub num_trees: usize,
    /// Features tried per split; `None` means `⌈√d⌉`.
    pub mtry: Option<usize>,
    pub min_node_size: usize,
    pub sample_fraction: f64,
    pub replace: bool,
    pub max_depth: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            num_trees: 500,
            mtry: None,
            min_node_size: 5,
            sample_fraction: 1.0,
            replace: true,
            max_depth: None,
        }
    }
}

impl ForestParams {
    pub fn resolved_mtry(&self, d: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub seed: u64,
    pub mtry: usize,
    pub trees: Vec<TreeModel>,
}

impl ForestModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Bagged regression trees. With weights, bootstrap draws are proportional to
/// the row weight. Tree `k` draws from its own stream derived from
/// `(seed, k)`, so the result does not depend on thread scheduling.
pub fn fit_forest(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    weights: Option<ArrayView1<'_, f64>>,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    let n = x.nrows();
    let d = x.ncols();
    if n == 0 || y.len() != n {
        return Err(Error::InvalidData(format!(
            "forest needs matching non-empty inputs (x has {n} rows, y has {})",
            y.len()
        )));
    }
    if params.num_trees == 0 {
        return Err(Error::InvalidArgument("num_trees must be >= 1".into()));
    }
    if let Some(m) = params.mtry {
        if m == 0 || (d > 0 && m > d) {
            return Err(Error::InvalidArgument(format!("mtry {m} outside 1..={d}")));
        }
    }
    if !(params.sample_fraction > 0.0 && params.sample_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sample_fraction {} outside (0, 1]",
            params.sample_fraction
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("forest target".into()));
    }
    let w: Option<Vec<f64>> = weights.map(|w| w.to_vec());
    let draws = ((params.sample_fraction * n as f64).round() as usize).max(1);
    let sampler = match &w {
        Some(w) if params.replace => Some(
            WeightedIndex::new(w).map_err(|e| Error::InvalidData(format!("forest weights: {e}")))?,
        ),
        _ => None,
    };
    let mtry = params.resolved_mtry(d);
    let max_depth = params.max_depth.unwrap_or(usize::MAX);
    let unit = vec![1.0; n];

    let trees = (0..params.num_trees)
        .into_par_iter()
        .map(|k| -> Result<TreeModel> {
            let mut rng = child_rng(seed, &[k as u64]);
            let rows: Vec<usize> = if params.replace {
                match &sampler {
                    Some(s) => (0..draws).map(|_| s.sample(&mut rng)).collect(),
                    None => (0..draws).map(|_| rng.random_range(0..n)).collect(),
                }
            } else {
                let base = w.as_deref().unwrap_or(&unit);
                weighted_sample_without_replacement(base, draws, &mut rng)?
            };
            Ok(grow(
                x,
                y,
                &unit,
                rows,
                max_depth,
                params.min_node_size,
                Some(FeatureSampler {
                    mtry,
                    rng: &mut rng,
                }),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel {
        params: params.clone(),
        seed,
        mtry,
        trees,
    })
}

#[cfg(test)]
mod tests {
    use ndarray::{Array1, Array2};
    use rand::Rng as _;

    use super::*;
    use crate::learners::tree::fit_tree;
    use crate::rng::rng_from_seed;

    fn smooth(n: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = rng_from_seed(seed);
        let x = Array2::from_shape_fn((n, 1), |_| rng.random_range(-3.0f64..3.0));
        let y = Array1::from_iter((0..n).map(|i| x[[i, 0]].sin() * 2.0 + rng.random_range(-0.3..0.3)));
        (x, y)
    }

    #[test]
    fn constant_target_is_reproduced() {
        let x = Array2::from_shape_fn((40, 3), |(i, j)| ((i + 1) * (j + 2)) as f64);
        let y = Array1::from_elem(40, -1.5);
        let f = fit_forest(x.view(), y.view(), None, &ForestParams { num_trees: 10, ..Default::default() }, 1).unwrap();
        assert!(f.trees.iter().all(|t| t.nodes.len() == 1));
        assert_eq!(f.predict_row(&[0.0, 1.0, 2.0]), -1.5);
    }

    #[test]
    fn single_full_tree_equals_plain_tree() {
        let (x, y) = smooth(120, 2);
        let params = ForestParams {
            num_trees: 1,
            mtry: Some(1),
            min_node_size: 5,
            sample_fraction: 1.0,
            replace: false,
            max_depth: Some(6),
        };
        let f = fit_forest(x.view(), y.view(), None, &params, 9).unwrap();
        let t = fit_tree(x.view(), y.view(), 6, 5, None).unwrap();
        for i in 0..x.nrows() {
            let row = [x[[i, 0]] + 0.01];
            assert_eq!(f.predict_row(&row), t.predict_row(&row));
        }
    }

    #[test]
    fn training_error_is_below_target_variance() {
        let (x, y) = smooth(500, 3);
        let f = fit_forest(x.view(), y.view(), None, &ForestParams { num_trees: 100, ..Default::default() }, 5).unwrap();
        let mean = y.mean().unwrap();
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
        let mse = (0..500)
            .map(|i| (f.predict_row(&[x[[i, 0]]]) - y[i]).powi(2))
            .sum::<f64>()
            / 500.0;
        assert!(mse < var, "mse {mse} var {var}");
        assert!(mse < 0.2 * var);
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let (x, y) = smooth(200, 4);
        let p = ForestParams { num_trees: 30, ..Default::default() };
        let a = fit_forest(x.view(), y.view(), None, &p, 77).unwrap();
        let b = fit_forest(x.view(), y.view(), None, &p, 77).unwrap();
        assert_eq!(a, b);
        let c = fit_forest(x.view(), y.view(), None, &p, 78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn weights_steer_the_bootstrap() {
        // Only rows with x > 0 carry weight; the fit ignores the other half.
        let (x, y) = smooth(300, 6);
        let w = x.column(0).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let f = fit_forest(x.view(), y.view(), Some(w.view()), &ForestParams { num_trees: 20, ..Default::default() }, 1).unwrap();
        let maxpos = (0..300).filter(|&i| x[[i, 0]] > 0.0).map(|i| y[i]).fold(f64::MIN, f64::max);
        let minpos = (0..300).filter(|&i| x[[i, 0]] > 0.0).map(|i| y[i]).fold(f64::MAX, f64::min);
        let p = f.predict_row(&[-2.0]);
        assert!(p >= minpos && p <= maxpos);
    }

    #[test]
    fn rejects_bad_params() {
        let (x, y) = smooth(10, 1);
        let bad = ForestParams { mtry: Some(2), ..Default::default() };
        assert!(fit_forest(x.view(), y.view(), None, &bad, 1).is_err());
        let bad = ForestParams { num_trees: 0, ..Default::default() };
        assert!(fit_forest(x.view(), y.view(), None, &bad, 1).is_err());
    }
}
