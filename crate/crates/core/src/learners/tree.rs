use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Regression tree stored as a flat node list; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<Node>,
    pub max_depth: usize,
    pub min_node_size: usize,
}

impl TreeModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Index of the leaf a row lands in.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut at = 0;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
        } = &self.nodes[at]
        {
            at = if x[*feature] <= *threshold { *left } else { *right };
        }
        at
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

/// Greedy CART fit on all features. Nodes with at most `min_node_size` rows
/// become leaves; ties go to the lowest feature index, then the lowest
/// threshold.
pub fn fit_tree(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    max_depth: usize,
    min_node_size: usize,
    weights: Option<ArrayView1<'_, f64>>,
) -> Result<TreeModel> {
    let n = x.nrows();
    if n == 0 || y.len() != n {
        return Err(Error::InvalidData(format!(
            "tree needs matching non-empty inputs (x has {n} rows, y has {})",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("tree target".into()));
    }
    let w: Vec<f64> = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; n],
    };
    let rows: Vec<usize> = (0..n).collect();
    Ok(grow(x, y, &w, rows, max_depth, min_node_size, None))
}

pub(crate) struct FeatureSampler<'a> {
    pub mtry: usize,
    pub rng: &'a mut Rng,
}

struct Builder<'a, 'r> {
    x: ArrayView2<'a, f64>,
    y: ArrayView1<'a, f64>,
    w: &'a [f64],
    max_depth: usize,
    min_node_size: usize,
    sampler: Option<FeatureSampler<'r>>,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Grow a tree on `rows` (duplicates allowed, as in a bootstrap sample).
pub(crate) fn grow(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    w: &[f64],
    rows: Vec<usize>,
    max_depth: usize,
    min_node_size: usize,
    sampler: Option<FeatureSampler<'_>>,
) -> TreeModel {
    let mut b = Builder {
        x,
        y,
        w,
        max_depth,
        min_node_size,
        sampler,
        nodes: Vec::new(),
    };
    b.build(rows, 0);
    TreeModel {
        nodes: b.nodes,
        max_depth,
        min_node_size,
    }
}

impl Builder<'_, '_> {
    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let (wsum, mean, sse) = self.moments(&rows);
        self.nodes.push(Node::Leaf { value: mean });
        let scale: f64 = rows.iter().map(|&i| self.w[i] * self.y[i] * self.y[i]).sum();
        if depth >= self.max_depth
            || rows.len() <= self.min_node_size
            || rows.len() < 2
            || !(wsum > 0.0)
            || sse <= 1e-14 * (1.0 + scale)
        {
            return id;
        }
        let Some(best) = self.best_split(&rows, mean, sse) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.x[[i, best.feature]] <= best.threshold);
        let left = self.build(left_rows, depth + 1);
        let right = self.build(right_rows, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn moments(&self, rows: &[usize]) -> (f64, f64, f64) {
        let mut ws = 0.0;
        let mut s = 0.0;
        for &i in rows {
            ws += self.w[i];
            s += self.w[i] * self.y[i];
        }
        let mean = if ws > 0.0 { s / ws } else { 0.0 };
        let sse = rows
            .iter()
            .map(|&i| self.w[i] * (self.y[i] - mean).powi(2))
            .sum();
        (ws, mean, sse)
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.ncols();
        match &mut self.sampler {
            Some(s) if s.mtry < d => {
                let mut f = sample(s.rng, d, s.mtry).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&mut self, rows: &[usize], mean: f64, sse: f64) -> Option<BestSplit> {
        let features = self.candidate_features();
        let tol = 1e-12 * sse;
        let mut best: Option<BestSplit> = None;
        let mut sorted = rows.to_vec();
        for f in features {
            let xf = self.x.column(f);
            sorted.sort_by(|&a, &b| xf[a].total_cmp(&xf[b]));
            let total_w: f64 = sorted.iter().map(|&i| self.w[i]).sum();
            let total_s: f64 = sorted.iter().map(|&i| self.w[i] * (self.y[i] - mean)).sum();
            let (mut wl, mut sl) = (0.0, 0.0);
            for k in 0..sorted.len() - 1 {
                let i = sorted[k];
                let r = self.y[i] - mean;
                wl += self.w[i];
                sl += self.w[i] * r;
                let (a, b) = (xf[i], xf[sorted[k + 1]]);
                if !(a < b) {
                    continue;
                }
                let wr = total_w - wl;
                if !(wl > 0.0 && wr > 0.0) {
                    continue;
                }
                let sr = total_s - sl;
                // SSE reduction from splitting a centred node.
                let gain = sl * sl / wl + sr * sr / wr - total_s * total_s / total_w;
                let better = match &best {
                    None => gain > tol,
                    Some(bs) => gain > bs.gain + tol,
                };
                if better {
                    let mid = 0.5 * (a + b);
                    let threshold = if mid < b { mid } else { a };
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}
