//! L2-regularized linear models: logistic, softmax and ridge regression.
//!
//! Minimizes `mean loss + |w|² / (2 C n)` on standardized features with
//! accelerated full-batch gradient descent. The intercept is not penalized.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{float_param, sigmoid, softmax, Learner, Model, SavedModel};
use crate::dataset::{Dataset, Task};
use crate::error::Result;
use crate::metrics::Predictions;
use crate::space::{default_space, Config, SearchSpace};

pub const MAX_ITERS: usize = 300;
pub const GRAD_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default)]
pub struct LinearLearner;

impl Learner for LinearLearner {
    fn name(&self) -> &str {
        "lr"
    }

    fn cost_constant(&self) -> f64 {
        160.0
    }

    fn supports(&self, _task: Task) -> bool {
        true
    }

    fn space(&self, n_train: usize, task: Task) -> Result<SearchSpace> {
        default_space("lr", n_train, task)
    }

    fn fit(&self, config: &Config, data: &Dataset, _seed: u64) -> Result<Box<dyn Model>> {
        Ok(Box::new(LinearModel::train(float_param(config, "C")?, data)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    task: Task,
    train_size: usize,
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// `n_features x n_outputs`, in standardized units.
    weights: Array2<f64>,
    bias: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    iterations: usize,
}

impl LinearModel {
    pub fn train(c: f64, data: &Dataset) -> Self {
        let n = data.n_instances();
        let f = data.n_features();
        let x = data.features();
        let mean: Vec<f64> = x.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or(vec![0.0; f]);
        let scale: Vec<f64> = (0..f)
            .map(|j| {
                let sd = x.column(j).std(0.0);
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        let z = standardize(x, &mean, &scale);

        let k = if data.task() == Task::Multiclass {
            data.n_classes()
        } else {
            1
        };
        let labels = data.labels();
        let (y_mean, y_scale) = if data.task() == Task::Regression {
            let y = Array1::from(labels.to_vec());
            let sd = y.std(0.0);
            (y.mean().unwrap_or(0.0), if sd > 1e-12 { sd } else { 1.0 })
        } else {
            (0.0, 1.0)
        };
        let target = Array2::from_shape_fn((n, k), |(i, j)| match data.task() {
            Task::Regression => (labels[i] - y_mean) / y_scale,
            Task::Binary => labels[i],
            Task::Multiclass => f64::from(labels[i] as usize == j),
        });

        let nf = n as f64;
        let reg = 1.0 / (c * nf);
        let curvature = match data.task() {
            Task::Binary => 0.25,
            Task::Multiclass => 0.5,
            Task::Regression => 1.0,
        };
        let step = 1.0 / (curvature * (f as f64 + 1.0) + reg);

        let mut w = Array2::<f64>::zeros((f, k));
        let mut b = Array1::<f64>::zeros(k);
        let mut w_prev = w.clone();
        let mut b_prev = b.clone();
        let mut iterations = 0;
        for t in 0..MAX_ITERS {
            iterations = t + 1;
            let momentum = t as f64 / (t as f64 + 3.0);
            let yw = &w + &((&w - &w_prev) * momentum);
            let yb = &b + &((&b - &b_prev) * momentum);
            let mut resid = z.dot(&yw) + &yb;
            match data.task() {
                Task::Binary => resid.mapv_inplace(sigmoid),
                Task::Multiclass => {
                    for mut row in resid.rows_mut() {
                        softmax(row.as_slice_mut().expect("standard layout"));
                    }
                }
                Task::Regression => {}
            }
            resid -= &target;
            let gw = z.t().dot(&resid) / nf + &yw * reg;
            let gb = resid.sum_axis(Axis(0)) / nf;
            let norm = (gw.iter().chain(gb.iter()).map(|g| g * g).sum::<f64>()).sqrt();
            w_prev = std::mem::replace(&mut w, &yw - &(gw * step));
            b_prev = std::mem::replace(&mut b, &yb - &(gb * step));
            if norm < GRAD_TOL {
                break;
            }
        }

        LinearModel {
            task: data.task(),
            train_size: n,
            mean,
            scale,
            weights: w,
            bias: b.to_vec(),
            y_mean,
            y_scale,
            iterations,
        }
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

fn standardize(x: ArrayView2<f64>, mean: &[f64], scale: &[f64]) -> Array2<f64> {
    let mut z = x.to_owned();
    for (j, mut col) in z.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|v| (v - mean[j]) / scale[j]);
    }
    z
}

impl Model for LinearModel {
    fn learner(&self) -> &str {
        "lr"
    }

    fn train_size(&self) -> usize {
        self.train_size
    }

    fn n_features(&self) -> usize {
        self.mean.len()
    }

    fn predict_unchecked(&self, x: ArrayView2<f64>) -> Predictions {
        let z = standardize(x, &self.mean, &self.scale);
        let mut s = z.dot(&self.weights) + &Array1::from(self.bias.clone());
        match self.task {
            Task::Regression => {
                Predictions::Values(s.column(0).iter().map(|v| v * self.y_scale + self.y_mean).collect())
            }
            Task::Binary => {
                let p = Array2::from_shape_fn((s.nrows(), 2), |(i, j)| {
                    let q = sigmoid(s[[i, 0]]);
                    if j == 1 { q } else { 1.0 - q }
                });
                Predictions::Proba(p)
            }
            Task::Multiclass => {
                for mut row in s.rows_mut() {
                    softmax(row.as_slice_mut().expect("standard layout"));
                }
                Predictions::Proba(s)
            }
        }
    }

    fn to_saved(&self) -> Option<SavedModel> {
        Some(SavedModel::Lr(self.clone()))
    }
}
