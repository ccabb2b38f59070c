//! Gradient-boosted regression trees grown leaf-wise on binned features.
//!
//! Squared loss for regression, logistic loss for binary and softmax for
//! multiclass (one tree per class per round). Splits maximize the
//! second-order gain `GL²/(HL+λ) + GR²/(HR+λ) - G²/(H+λ)` subject to both
//! children carrying at least `min_child_weight` hessian.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::binning::BinnedMatrix;
use super::tree::{partition, Node, Tree};
use super::{float_param, int_param, sigmoid, softmax, Learner, Model, SavedModel};
use crate::dataset::{Dataset, Task};
use crate::error::Result;
use crate::metrics::Predictions;
use crate::space::{default_space, Config, SearchSpace};

#[derive(Debug, Clone, Copy, Default)]
pub struct GradientBoosting;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbtParams {
    pub tree_num: usize,
    pub leaf_num: usize,
    pub min_child_weight: f64,
    pub learning_rate: f64,
    pub reg_lambda: f64,
}

impl GbtParams {
    pub fn from_config(config: &Config) -> Result<Self> {
        Ok(GbtParams {
            tree_num: int_param(config, "tree_num")?.max(1) as usize,
            leaf_num: int_param(config, "leaf_num")?.max(2) as usize,
            min_child_weight: float_param(config, "min_child_weight")?,
            learning_rate: float_param(config, "learning_rate")?,
            reg_lambda: float_param(config, "reg_lambda")?,
        })
    }
}

impl Learner for GradientBoosting {
    fn name(&self) -> &str {
        "gbt"
    }

    fn cost_constant(&self) -> f64 {
        1.0
    }

    fn supports(&self, _task: Task) -> bool {
        true
    }

    fn space(&self, n_train: usize, task: Task) -> Result<SearchSpace> {
        default_space("gbt", n_train, task)
    }

    fn fit(&self, config: &Config, data: &Dataset, _seed: u64) -> Result<Box<dyn Model>> {
        Ok(Box::new(GbtModel::train(&GbtParams::from_config(config)?, data)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    task: Task,
    n_features: usize,
    train_size: usize,
    n_outputs: usize,
    base: Vec<f64>,
    /// Round-major: `trees[round * n_outputs + output]`.
    trees: Vec<Tree<f64>>,
}

impl GbtModel {
    pub fn train(params: &GbtParams, data: &Dataset) -> Self {
        let n = data.n_instances();
        let y = data.labels();
        let n_outputs = if data.task() == Task::Multiclass {
            data.n_classes()
        } else {
            1
        };
        let base = initial_scores(data, n_outputs);
        let binned = BinnedMatrix::new(data.features());
        let mut scores: Vec<f64> = (0..n).flat_map(|_| base.iter().copied()).collect();
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let mut probs = vec![0.0; n * n_outputs];
        let mut trees = Vec::with_capacity(params.tree_num * n_outputs);
        let mut grower = Grower::new(&binned, params);

        for _ in 0..params.tree_num {
            if data.task() == Task::Multiclass {
                probs.copy_from_slice(&scores);
                for row in probs.chunks_mut(n_outputs) {
                    softmax(row);
                }
            }
            let mut round = Vec::with_capacity(n_outputs);
            for k in 0..n_outputs {
                for i in 0..n {
                    let (g, h) = match data.task() {
                        Task::Regression => (scores[i] - y[i], 1.0),
                        Task::Binary => {
                            let p = sigmoid(scores[i]);
                            (p - y[i], (p * (1.0 - p)).max(1e-16))
                        }
                        Task::Multiclass => {
                            let p = probs[i * n_outputs + k];
                            let target = if y[i] as usize == k { 1.0 } else { 0.0 };
                            (p - target, (p * (1.0 - p)).max(1e-16))
                        }
                    };
                    grad[i] = g;
                    hess[i] = h;
                }
                let (tree, assignment) = grower.grow(&grad, &hess);
                for (rows, value) in assignment {
                    for &r in rows.iter() {
                        scores[r as usize * n_outputs + k] += value;
                    }
                }
                round.push(tree);
            }
            trees.extend(round);
        }

        GbtModel {
            task: data.task(),
            n_features: data.n_features(),
            train_size: n,
            n_outputs,
            base,
            trees,
        }
    }

    /// Boosting rounds.
    pub fn n_rounds(&self) -> usize {
        self.trees.len() / self.n_outputs
    }

    pub fn trees(&self) -> impl Iterator<Item = &Tree<f64>> {
        self.trees.iter()
    }

    pub fn max_leaves(&self) -> usize {
        self.trees.iter().map(Tree::n_leaves).max().unwrap_or(0)
    }
}

fn initial_scores(data: &Dataset, n_outputs: usize) -> Vec<f64> {
    let n = data.n_instances() as f64;
    match data.task() {
        Task::Regression => vec![data.labels().iter().sum::<f64>() / n],
        Task::Binary => {
            let p = (data.labels().iter().sum::<f64>() / n).clamp(1e-6, 1.0 - 1e-6);
            vec![(p / (1.0 - p)).ln()]
        }
        Task::Multiclass => {
            let counts = data.class_counts();
            (0..n_outputs)
                .map(|k| (counts[k] as f64 / n).max(1e-6).ln())
                .collect()
        }
    }
}

impl Model for GbtModel {
    fn learner(&self) -> &str {
        "gbt"
    }

    fn train_size(&self) -> usize {
        self.train_size
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_unchecked(&self, x: ArrayView2<f64>) -> Predictions {
        let k = self.n_outputs;
        let mut raw = ndarray::Array2::<f64>::zeros((x.nrows(), k));
        for (i, row) in x.rows().into_iter().enumerate() {
            for (j, base) in self.base.iter().enumerate() {
                raw[[i, j]] = *base;
            }
            for (t, tree) in self.trees.iter().enumerate() {
                raw[[i, t % k]] += *tree.leaf(row);
            }
        }
        match self.task {
            Task::Regression => Predictions::Values(raw.column(0).to_vec()),
            Task::Binary => {
                let mut p = ndarray::Array2::zeros((x.nrows(), 2));
                for i in 0..x.nrows() {
                    let q = sigmoid(raw[[i, 0]]);
                    p[[i, 0]] = 1.0 - q;
                    p[[i, 1]] = q;
                }
                Predictions::Proba(p)
            }
            Task::Multiclass => {
                for mut row in raw.rows_mut() {
                    softmax(row.as_slice_mut().expect("standard layout"));
                }
                Predictions::Proba(raw)
            }
        }
    }

    fn to_saved(&self) -> Option<SavedModel> {
        Some(SavedModel::Gbt(self.clone()))
    }
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    gain: f64,
    feature: usize,
    bin: u8,
}

#[derive(Debug)]
struct OpenLeaf {
    node: usize,
    start: usize,
    end: usize,
    g: f64,
    h: f64,
    split: Option<SplitCandidate>,
}

struct Grower<'a> {
    binned: &'a BinnedMatrix,
    params: &'a GbtParams,
    rows: Vec<u32>,
    hist: Vec<(f64, f64, u32)>,
}

impl<'a> Grower<'a> {
    fn new(binned: &'a BinnedMatrix, params: &'a GbtParams) -> Self {
        Grower {
            binned,
            params,
            rows: Vec::with_capacity(binned.n_rows),
            hist: vec![(0.0, 0.0, 0); super::binning::MAX_BINS],
        }
    }

    /// Grows one tree; returns it with the rows of every leaf and the value
    /// added to their scores.
    fn grow(&mut self, grad: &[f64], hess: &[f64]) -> (Tree<f64>, Vec<(Vec<u32>, f64)>) {
        self.rows.clear();
        self.rows.extend(0..self.binned.n_rows as u32);
        let (g, h) = sums(&self.rows, grad, hess);
        let mut nodes = vec![Node::Leaf(0.0)];
        let mut root = OpenLeaf {
            node: 0,
            start: 0,
            end: self.rows.len(),
            g,
            h,
            split: None,
        };
        root.split = self.best_split(&root, grad, hess);
        let mut leaves = vec![root];

        while leaves.len() < self.params.leaf_num {
            let pick = leaves
                .iter()
                .enumerate()
                .filter_map(|(i, l)| l.split.map(|s| (i, s.gain)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            let Some((i, _)) = pick else { break };
            let leaf = leaves.swap_remove(i);
            let split = leaf.split.expect("picked leaf has a split");
            let column = self.binned.column(split.feature);
            let n_left = partition(&mut self.rows[leaf.start..leaf.end], column, split.bin);
            let mid = leaf.start + n_left;
            let (gl, hl) = sums(&self.rows[leaf.start..mid], grad, hess);
            let left_id = nodes.len();
            nodes.push(Node::Leaf(0.0));
            nodes.push(Node::Leaf(0.0));
            nodes[leaf.node] = Node::Split {
                feature: split.feature as u32,
                threshold: self.binned.thresholds[split.feature][split.bin as usize],
                left: left_id as u32,
                right: left_id as u32 + 1,
            };
            for (node, start, end, g, h) in [
                (left_id, leaf.start, mid, gl, hl),
                (left_id + 1, mid, leaf.end, leaf.g - gl, leaf.h - hl),
            ] {
                let mut child = OpenLeaf {
                    node,
                    start,
                    end,
                    g,
                    h,
                    split: None,
                };
                child.split = self.best_split(&child, grad, hess);
                leaves.push(child);
            }
        }

        let mut assignment = Vec::with_capacity(leaves.len());
        for leaf in &leaves {
            let value = -leaf.g / (leaf.h + self.params.reg_lambda) * self.params.learning_rate;
            nodes[leaf.node] = Node::Leaf(value);
            assignment.push((self.rows[leaf.start..leaf.end].to_vec(), value));
        }
        (Tree { nodes }, assignment)
    }

    fn best_split(&mut self, leaf: &OpenLeaf, grad: &[f64], hess: &[f64]) -> Option<SplitCandidate> {
        let rows = &self.rows[leaf.start..leaf.end];
        if rows.len() < 2 || leaf.h < 2.0 * self.params.min_child_weight {
            return None;
        }
        let lambda = self.params.reg_lambda;
        let mcw = self.params.min_child_weight;
        let parent = leaf.g * leaf.g / (leaf.h + lambda);
        let mut best: Option<SplitCandidate> = None;
        for f in 0..self.binned.n_features() {
            let nb = self.binned.n_bins(f);
            if nb < 2 {
                continue;
            }
            let hist = &mut self.hist[..nb];
            hist.fill((0.0, 0.0, 0));
            let column = self.binned.column(f);
            for &r in rows {
                let e = &mut hist[column[r as usize] as usize];
                e.0 += grad[r as usize];
                e.1 += hess[r as usize];
                e.2 += 1;
            }
            let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0u32);
            for (b, e) in hist[..nb - 1].iter().enumerate() {
                gl += e.0;
                hl += e.1;
                cl += e.2;
                let cr = rows.len() as u32 - cl;
                if e.2 == 0 {
                    continue;
                }
                if cr == 0 {
                    break;
                }
                let hr = leaf.h - hl;
                if hl < mcw || hr < mcw {
                    continue;
                }
                let gr = leaf.g - gl;
                let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
                if gain > 1e-12 && best.is_none_or(|s| gain > s.gain) {
                    best = Some(SplitCandidate {
                        gain,
                        feature: f,
                        bin: b as u8,
                    });
                }
            }
        }
        best
    }
}

fn sums(rows: &[u32], grad: &[f64], hess: &[f64]) -> (f64, f64) {
    rows.iter().fold((0.0, 0.0), |(g, h), &r| {
        (g + grad[r as usize], h + hess[r as usize])
    })
}
