use crate::numeric::{derive_seed, mean, stream_rng};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub trait Regressor {
    fn predict(&self, x: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorKind {
    TabularMean { bins: usize },
    TreeEnsemble { n_trees: usize, max_depth: usize, min_leaf: usize },
}

impl Default for RegressorKind {
    fn default() -> Self {
        RegressorKind::TreeEnsemble { n_trees: 20, max_depth: 6, min_leaf: 5 }
    }
}

impl RegressorKind {
    pub fn fit(&self, x: &[Vec<f64>], y: &[f64], seed: u64) -> QRegressor {
        match *self {
            RegressorKind::TabularMean { bins } => QRegressor::TabularMean(TabularMean::fit(x, y, bins)),
            RegressorKind::TreeEnsemble { n_trees, max_depth, min_leaf } => {
                QRegressor::TreeEnsemble(TreeEnsemble::fit(x, y, n_trees, max_depth, min_leaf, seed))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QRegressor {
    TabularMean(TabularMean),
    TreeEnsemble(TreeEnsemble),
}

impl Regressor for QRegressor {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            QRegressor::TabularMean(r) => r.predict(x),
            QRegressor::TreeEnsemble(r) => r.predict(x),
        }
    }
}

/// Mean target per cell of an equal-width grid over the features; unseen
/// cells fall back to the global mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMean {
    bins: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Sorted by key.
    cells: Vec<(Vec<u32>, f64)>,
    global_mean: f64,
}

impl TabularMean {
    pub fn fit(x: &[Vec<f64>], y: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let d = x.first().map_or(0, Vec::len);
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for row in x {
            for (j, &v) in row.iter().enumerate() {
                lower[j] = lower[j].min(v);
                upper[j] = upper[j].max(v);
            }
        }
        let mut out = Self { bins, lower, upper, cells: Vec::new(), global_mean: if y.is_empty() { 0.0 } else { mean(y) } };
        let mut acc: std::collections::BTreeMap<Vec<u32>, (f64, usize)> = Default::default();
        for (row, &t) in x.iter().zip(y) {
            let e = acc.entry(out.key(row)).or_insert((0.0, 0));
            e.0 += t;
            e.1 += 1;
        }
        out.cells = acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect();
        out
    }

    fn key(&self, row: &[f64]) -> Vec<u32> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| {
                let span = self.upper[j] - self.lower[j];
                if span > 0.0 {
                    (((v - self.lower[j]) / span * self.bins as f64).floor().max(0.0) as u32).min(self.bins as u32 - 1)
                } else {
                    0
                }
            })
            .collect()
    }
}

impl Regressor for TabularMean {
    fn predict(&self, x: &[f64]) -> f64 {
        let k = self.key(x);
        match self.cells.binary_search_by(|(c, _)| c.cmp(&k)) {
            Ok(i) => self.cells[i].1,
            Err(_) => self.global_mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

struct TreeBuilder<'a, R: Rng> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
    mtry: usize,
    rng: R,
    nodes: Vec<Node>,
}

impl<R: Rng> TreeBuilder<'_, R> {
    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let m = idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(Node::Leaf(m));
        if depth >= self.max_depth || idx.len() < 2 * self.min_leaf {
            return id;
        }
        let d = self.x[0].len();
        let features = sample_indices(&mut self.rng, d, self.mtry.min(d)).into_vec();
        let mut best: Option<(f64, usize, f64)> = None;
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let n = idx.len() as f64;
        for &f in &features {
            idx.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left_sum = 0.0;
            for k in 0..idx.len() - 1 {
                left_sum += self.y[idx[k]];
                let nl = (k + 1) as f64;
                let (v, next) = (self.x[idx[k]][f], self.x[idx[k + 1]][f]);
                if k + 1 < self.min_leaf || idx.len() - k - 1 < self.min_leaf || v == next {
                    continue;
                }
                // Maximizing this is equivalent to minimizing the split SSE.
                let gain = left_sum * left_sum / nl + (total - left_sum).powi(2) / (n - nl);
                if best.is_none_or(|(g, _, _)| gain > g + 1e-12) {
                    best = Some((gain, f, 0.5 * (v + next)));
                }
            }
        }
        let Some((gain, feature, threshold)) = best else { return id };
        if gain <= total * total / n + 1e-12 {
            return id;
        }
        let split = partition_stable(idx, |&i| self.x[i][feature] <= threshold);
        let (l, r) = idx.split_at_mut(split);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

fn partition_stable(idx: &mut [usize], pred: impl Fn(&usize) -> bool) -> usize {
    let mut keep: Vec<usize> = idx.iter().copied().filter(|i| pred(i)).collect();
    let split = keep.len();
    keep.extend(idx.iter().copied().filter(|i| !pred(i)));
    idx.copy_from_slice(&keep);
    split
}

/// Bagged depth-limited regression trees with random feature subsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    trees: Vec<Tree>,
    fallback: f64,
}

impl TreeEnsemble {
    pub fn fit(x: &[Vec<f64>], y: &[f64], n_trees: usize, max_depth: usize, min_leaf: usize, seed: u64) -> Self {
        let n = x.len();
        if n == 0 {
            return Self { trees: Vec::new(), fallback: 0.0 };
        }
        let d = x[0].len();
        let mtry = ((d as f64).sqrt().ceil() as usize).max(1);
        let trees = (0..n_trees.max(1))
            .into_par_iter()
            .map(|t| {
                let mut rng = stream_rng(derive_seed(seed, &[t as u64]), &[]);
                let mut idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let mut b = TreeBuilder { x, y, max_depth, min_leaf: min_leaf.max(1), mtry, rng, nodes: Vec::new() };
                b.build(&mut idx, 0);
                Tree { nodes: b.nodes }
            })
            .collect();
        Self { trees, fallback: mean(y) }
    }
}

impl Regressor for TreeEnsemble {
    fn predict(&self, x: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return self.fallback;
        }
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![(i % 10) as f64, (i % 7) as f64]).collect();
        let y = x.iter().map(|r| if r[0] >= 5.0 { 1.0 } else { 0.0 }).collect();
        (x, y)
    }

    #[test]
    fn trees_learn_a_step() {
        let (x, y) = step_data();
        let m = TreeEnsemble::fit(&x, &y, 20, 6, 2, 4);
        assert!(m.predict(&[8.0, 3.0]) > 0.9);
        assert!(m.predict(&[1.0, 3.0]) < 0.1);
        assert_eq!(m, TreeEnsemble::fit(&x, &y, 20, 6, 2, 4));
    }

    #[test]
    fn tabular_mean_cells_and_fallback() {
        let x = vec![vec![0.0], vec![0.0], vec![10.0]];
        let y = vec![1.0, 3.0, 5.0];
        let m = TabularMean::fit(&x, &y, 10);
        assert_eq!(m.predict(&[0.0]), 2.0);
        assert_eq!(m.predict(&[10.0]), 5.0);
        assert_eq!(m.predict(&[5.0]), 3.0);
    }
}
