//! Bagged decision trees with per-node feature subsampling.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::binning::{BinnedMatrix, MAX_BINS};
use super::tree::{partition, Node, Tree};
use super::{cat_param, float_param, int_param, Learner, Model, SavedModel};
use crate::dataset::{Dataset, Task};
use crate::error::Result;
use crate::metrics::Predictions;
use crate::rng::substream;
use crate::space::{default_space, Config, SearchSpace};

#[derive(Debug, Clone, Copy, Default)]
pub struct RandomForest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub tree_num: usize,
    pub max_features_fraction: f64,
    pub criterion: Criterion,
}

impl ForestParams {
    pub fn from_config(config: &Config, task: Task) -> Result<Self> {
        let criterion = if task.is_classification() {
            match cat_param(config, "split_criterion").unwrap_or("gini") {
                "entropy" => Criterion::Entropy,
                _ => Criterion::Gini,
            }
        } else {
            Criterion::Variance
        };
        Ok(ForestParams {
            tree_num: int_param(config, "tree_num")?.max(1) as usize,
            max_features_fraction: float_param(config, "max_features_fraction")?,
            criterion,
        })
    }
}

impl Learner for RandomForest {
    fn name(&self) -> &str {
        "rf"
    }

    fn cost_constant(&self) -> f64 {
        2.0
    }

    fn supports(&self, _task: Task) -> bool {
        true
    }

    fn space(&self, n_train: usize, task: Task) -> Result<SearchSpace> {
        default_space("rf", n_train, task)
    }

    fn fit(&self, config: &Config, data: &Dataset, seed: u64) -> Result<Box<dyn Model>> {
        let params = ForestParams::from_config(config, data.task())?;
        Ok(Box::new(ForestModel::train(&params, data, seed)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    task: Task,
    n_features: usize,
    train_size: usize,
    /// Class count for classification, 1 for regression.
    width: usize,
    trees: Vec<Tree<Vec<f64>>>,
}

impl ForestModel {
    pub fn train(params: &ForestParams, data: &Dataset, seed: u64) -> Self {
        let binned = BinnedMatrix::new(data.features());
        let width = if data.task().is_classification() {
            data.n_classes()
        } else {
            1
        };
        let n = data.n_instances();
        let m = ((params.max_features_fraction * data.n_features() as f64).round() as usize)
            .clamp(1, data.n_features().max(1));
        let builder = TreeBuilder {
            binned: &binned,
            labels: data.labels(),
            width,
            criterion: params.criterion,
            m,
        };
        let trees = (0..params.tree_num)
            .map(|t| {
                let mut rng = substream(seed, t as u64);
                let mut rows: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
                builder.build(&mut rows, &mut rng)
            })
            .collect();
        ForestModel {
            task: data.task(),
            n_features: data.n_features(),
            train_size: n,
            width,
            trees,
        }
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

impl Model for ForestModel {
    fn learner(&self) -> &str {
        "rf"
    }

    fn train_size(&self) -> usize {
        self.train_size
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_unchecked(&self, x: ArrayView2<f64>) -> Predictions {
        let mut out = Array2::<f64>::zeros((x.nrows(), self.width));
        let scale = 1.0 / self.trees.len() as f64;
        for (i, row) in x.rows().into_iter().enumerate() {
            for tree in &self.trees {
                for (o, v) in out.row_mut(i).iter_mut().zip(tree.leaf(row)) {
                    *o += v * scale;
                }
            }
        }
        if self.task.is_classification() {
            Predictions::Proba(out)
        } else {
            Predictions::Values(out.column(0).to_vec())
        }
    }

    fn to_saved(&self) -> Option<SavedModel> {
        Some(SavedModel::Rf(self.clone()))
    }
}

struct TreeBuilder<'a> {
    binned: &'a BinnedMatrix,
    labels: &'a [f64],
    width: usize,
    criterion: Criterion,
    m: usize,
}

/// Per-bin sufficient statistics: class counts, or (count, sum, sum of squares).
struct Stats {
    width: usize,
    data: Vec<f64>,
}

impl Stats {
    fn new(width: usize, slots: usize) -> Self {
        Stats {
            width,
            data: vec![0.0; width * slots],
        }
    }

    fn slot(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    fn slot_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.width..(i + 1) * self.width]
    }
}

impl TreeBuilder<'_> {
    fn stat_width(&self) -> usize {
        if self.criterion == Criterion::Variance {
            3
        } else {
            self.width
        }
    }

    fn add(&self, acc: &mut [f64], row: u32) {
        let y = self.labels[row as usize];
        if self.criterion == Criterion::Variance {
            acc[0] += 1.0;
            acc[1] += y;
            acc[2] += y * y;
        } else {
            acc[y as usize] += 1.0;
        }
    }

    /// Weighted impurity `n * impurity(node)`; lower is better.
    fn weighted_impurity(&self, s: &[f64]) -> f64 {
        match self.criterion {
            Criterion::Variance => s[2] - s[1] * s[1] / s[0].max(1.0),
            Criterion::Gini => {
                let n: f64 = s.iter().sum();
                if n == 0.0 {
                    return 0.0;
                }
                n - s.iter().map(|c| c * c).sum::<f64>() / n
            }
            Criterion::Entropy => {
                let n: f64 = s.iter().sum();
                s.iter()
                    .filter(|&&c| c > 0.0)
                    .map(|&c| -c * (c / n).ln())
                    .sum()
            }
        }
    }

    fn leaf_value(&self, s: &[f64]) -> Vec<f64> {
        if self.criterion == Criterion::Variance {
            vec![s[1] / s[0]]
        } else {
            let n: f64 = s.iter().sum();
            s.iter().map(|c| c / n).collect()
        }
    }

    fn build(&self, rows: &mut [u32], rng: &mut impl Rng) -> Tree<Vec<f64>> {
        let w = self.stat_width();
        let mut nodes = Vec::new();
        let mut hist = Stats::new(w, MAX_BINS);
        let mut features: Vec<usize> = (0..self.binned.n_features()).collect();
        // (node id, start, end)
        let mut stack = vec![(0usize, 0usize, rows.len())];
        nodes.push(Node::Leaf(Vec::new()));
        while let Some((id, start, end)) = stack.pop() {
            let node_rows = &mut rows[start..end];
            let mut total = vec![0.0; w];
            for &r in node_rows.iter() {
                self.add(&mut total, r);
            }
            let parent = self.weighted_impurity(&total);
            if node_rows.len() < 2 || parent <= 1e-12 {
                nodes[id] = Node::Leaf(self.leaf_value(&total));
                continue;
            }
            features.shuffle(rng);
            let mut best: Option<(f64, usize, u8)> = None;
            let mut evaluated = 0;
            for &f in &features {
                if evaluated >= self.m {
                    break;
                }
                let nb = self.binned.n_bins(f);
                let column = self.binned.column(f);
                hist.data[..nb * w].fill(0.0);
                let mut lo = u8::MAX;
                let mut hi = 0u8;
                for &r in node_rows.iter() {
                    let b = column[r as usize];
                    lo = lo.min(b);
                    hi = hi.max(b);
                    self.add(hist.slot_mut(b as usize), r);
                }
                if lo == hi {
                    continue;
                }
                evaluated += 1;
                let mut left = vec![0.0; w];
                let mut right = vec![0.0; w];
                for b in lo..hi {
                    let slot = hist.slot(b as usize);
                    if slot.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    for (l, v) in left.iter_mut().zip(slot) {
                        *l += v;
                    }
                    for ((r, t), l) in right.iter_mut().zip(&total).zip(&left) {
                        *r = t - l;
                    }
                    let score = self.weighted_impurity(&left) + self.weighted_impurity(&right);
                    if score < parent - 1e-12 && best.is_none_or(|(s, _, _)| score < s) {
                        best = Some((score, f, b));
                    }
                }
            }
            let Some((_, f, b)) = best else {
                nodes[id] = Node::Leaf(self.leaf_value(&total));
                continue;
            };
            let n_left = partition(node_rows, self.binned.column(f), b);
            let left = nodes.len();
            nodes.push(Node::Leaf(Vec::new()));
            nodes.push(Node::Leaf(Vec::new()));
            nodes[id] = Node::Split {
                feature: f as u32,
                threshold: self.binned.thresholds[f][b as usize],
                left: left as u32,
                right: left as u32 + 1,
            };
            stack.push((left + 1, start + n_left, end));
            stack.push((left, start, start + n_left));
        }
        Tree { nodes }
    }
}
