//! Learner contract, the built-in learners and trial evaluation.

use std::fmt::Debug;
use std::sync::Arc;
use std::time::Instant;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Fold, Task};
use crate::error::{Error, Result};
use crate::metrics::{Metric, Predictions};
use crate::space::{Config, ParamValue, SearchSpace};

mod binning;
mod tree;
pub mod forest;
pub mod gbt;
pub mod linear;

pub use forest::{ForestModel, RandomForest};
pub use gbt::{GbtModel, GradientBoosting};
pub use linear::{LinearLearner, LinearModel};

/// A trainable model family with its own hyperparameter space.
pub trait Learner: Send + Sync {
    fn name(&self) -> &str;

    /// Cost of the cheapest configuration relative to the fastest learner.
    fn cost_constant(&self) -> f64;

    fn supports(&self, task: Task) -> bool;

    /// Search space for `n_train` training instances.
    fn space(&self, n_train: usize, task: Task) -> Result<SearchSpace>;

    /// Trains on `data`; must be deterministic in `(config, data, seed)`.
    fn fit(&self, config: &Config, data: &Dataset, seed: u64) -> Result<Box<dyn Model>>;
}

pub trait Model: Send + Sync + Debug {
    fn learner(&self) -> &str;

    fn train_size(&self) -> usize;

    fn n_features(&self) -> usize;

    /// Class probabilities for classification, values for regression.
    fn predict_unchecked(&self, x: ArrayView2<f64>) -> Predictions;

    fn predict(&self, x: ArrayView2<f64>) -> Result<Predictions> {
        if x.ncols() != self.n_features() {
            return Err(Error::ColumnMismatch {
                expected: self.n_features(),
                actual: x.ncols(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    /// Serializable form, when the model has one.
    fn to_saved(&self) -> Option<SavedModel> {
        None
    }
}

/// Serialized form of the built-in models.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "lowercase")]
pub enum SavedModel {
    Gbt(GbtModel),
    Rf(ForestModel),
    Lr(LinearModel),
}

impl SavedModel {
    pub fn into_model(self) -> Box<dyn Model> {
        match self {
            SavedModel::Gbt(m) => Box::new(m),
            SavedModel::Rf(m) => Box::new(m),
            SavedModel::Lr(m) => Box::new(m),
        }
    }
}

/// A learner together with the search space used for it in one run.
#[derive(Clone)]
pub struct LearnerSpec {
    pub learner: Arc<dyn Learner>,
    pub space: SearchSpace,
}

impl Debug for LearnerSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LearnerSpec")
            .field("name", &self.learner.name())
            .field("space", &self.space)
            .finish()
    }
}

impl LearnerSpec {
    pub fn new(learner: Arc<dyn Learner>, n_train: usize, task: Task) -> Result<Self> {
        let space = learner.space(n_train, task)?;
        Ok(LearnerSpec { learner, space })
    }

    pub fn name(&self) -> &str {
        self.learner.name()
    }

    pub fn cost_constant(&self) -> f64 {
        self.learner.cost_constant()
    }
}

/// Checks the configuration against the spec's space and trains.
pub fn train(spec: &LearnerSpec, config: &Config, data: &Dataset, seed: u64) -> Result<Box<dyn Model>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !spec.learner.supports(data.task()) {
        return Err(Error::UnsupportedTask {
            learner: spec.name().to_string(),
            task: data.task().to_string(),
        });
    }
    spec.space.check(config)?;
    spec.learner.fit(config, data, seed)
}

/// Trains on `train`, scores on `validation`. Returns the validation error
/// and the wall-clock seconds spent training and predicting.
pub fn evaluate_split(
    spec: &LearnerSpec,
    config: &Config,
    train_data: &Dataset,
    validation: &Dataset,
    metric: &Metric,
    seed: u64,
) -> Result<(f64, f64)> {
    let start = Instant::now();
    let model = train(spec, config, train_data, seed)?;
    let pred = model.predict(validation.features())?;
    let cost = start.elapsed().as_secs_f64();
    Ok((metric.error(&pred, validation.labels())?, cost))
}

/// Trains and scores on every fold. Returns the mean validation error and
/// the total seconds spent in training and prediction.
pub fn evaluate(
    spec: &LearnerSpec,
    config: &Config,
    folds: &[Fold],
    metric: &Metric,
    seed: u64,
) -> Result<(f64, f64)> {
    if folds.is_empty() {
        return Err(Error::InvalidPlan("no folds to evaluate".into()));
    }
    let (mut error, mut cost) = (0.0, 0.0);
    for fold in folds {
        let (e, c) = evaluate_split(spec, config, &fold.train, &fold.validation, metric, seed)?;
        error += e;
        cost += c;
    }
    Ok((error / folds.len() as f64, cost))
}

/// Learners by name; the built-ins plus anything added at runtime.
#[derive(Clone)]
pub struct LearnerRegistry {
    learners: Vec<Arc<dyn Learner>>,
}

impl Default for LearnerRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl LearnerRegistry {
    pub fn empty() -> Self {
        LearnerRegistry { learners: Vec::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.add_learner(Arc::new(GradientBoosting));
        r.add_learner(Arc::new(RandomForest));
        r.add_learner(Arc::new(LinearLearner));
        r
    }

    /// Registers a learner, replacing any learner with the same name.
    pub fn add_learner(&mut self, learner: Arc<dyn Learner>) {
        self.learners.retain(|l| l.name() != learner.name());
        self.learners.push(learner);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Learner>> {
        self.learners
            .iter()
            .find(|l| l.name() == name)
            .cloned()
            .ok_or_else(|| Error::UnknownLearner(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.learners.iter().map(|l| l.name()).collect()
    }

    pub fn for_task(&self, task: Task) -> Vec<Arc<dyn Learner>> {
        self.learners.iter().filter(|l| l.supports(task)).cloned().collect()
    }
}

pub(crate) fn int_param(config: &Config, name: &str) -> Result<i64> {
    match config.get(name) {
        Some(ParamValue::Int(v)) => Ok(*v),
        Some(ParamValue::Float(v)) if v.fract() == 0.0 => Ok(*v as i64),
        other => Err(Error::InvalidConfig(format!("{name}: expected integer, got {other:?}"))),
    }
}

pub(crate) fn float_param(config: &Config, name: &str) -> Result<f64> {
    config
        .get(name)
        .and_then(ParamValue::as_f64)
        .ok_or_else(|| Error::InvalidConfig(format!("{name}: expected number")))
}

pub(crate) fn cat_param<'a>(config: &'a Config, name: &str) -> Result<&'a str> {
    config
        .get(name)
        .and_then(ParamValue::as_str)
        .ok_or_else(|| Error::InvalidConfig(format!("{name}: expected a choice")))
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// In-place softmax over one row of scores.
pub(crate) fn softmax(scores: &mut [f64]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}
