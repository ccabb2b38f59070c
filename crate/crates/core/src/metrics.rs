//! Error metrics. Every metric is oriented so that lower is better.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;

use crate::dataset::Task;
use crate::error::{Error, Result};

/// Model output: class probabilities (one row per instance) or real values.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    Proba(Array2<f64>),
    Values(Vec<f64>),
}

impl Predictions {
    pub fn len(&self) -> usize {
        match self {
            Predictions::Proba(p) => p.nrows(),
            Predictions::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point predictions: argmax class index for probabilities.
    pub fn point(&self) -> Vec<f64> {
        match self {
            Predictions::Values(v) => v.clone(),
            Predictions::Proba(p) => p
                .rows()
                .into_iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                            if v > best.1 {
                                (i, v)
                            } else {
                                best
                            }
                        })
                        .0 as f64
                })
                .collect(),
        }
    }

    /// Probability of `class` for every row. A plain value vector is read as
    /// the positive-class probability of a binary problem.
    fn class_scores(&self, class: usize) -> Result<Vec<f64>> {
        match self {
            Predictions::Proba(p) if class < p.ncols() => Ok(p.column(class).to_vec()),
            Predictions::Proba(p) => Err(Error::Metric(format!(
                "class {class} outside {} probability columns",
                p.ncols()
            ))),
            Predictions::Values(v) => match class {
                1 => Ok(v.clone()),
                0 => Ok(v.iter().map(|p| 1.0 - p).collect()),
                _ => Err(Error::Metric("value predictions only carry two classes".into())),
            },
        }
    }

    fn n_score_columns(&self) -> usize {
        match self {
            Predictions::Proba(p) => p.ncols(),
            Predictions::Values(_) => 2,
        }
    }
}

pub type MetricFn = dyn Fn(&Predictions, &[f64]) -> Result<f64> + Send + Sync;

#[derive(Clone)]
pub enum Metric {
    OneMinusAuc,
    LogLoss,
    OneMinusR2,
    Mse,
    QerrorP95,
    Custom { name: String, func: Arc<MetricFn> },
}

impl fmt::Debug for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Metric({})", self.name())
    }
}

impl Metric {
    /// Wraps a user callable; it must return a value to minimize.
    pub fn custom(
        name: impl Into<String>,
        func: impl Fn(&Predictions, &[f64]) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        Metric::Custom {
            name: name.into(),
            func: Arc::new(func),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Metric::OneMinusAuc => "one_minus_auc",
            Metric::LogLoss => "log_loss",
            Metric::OneMinusR2 => "one_minus_r2",
            Metric::Mse => "mse",
            Metric::QerrorP95 => "qerror_p95",
            Metric::Custom { name, .. } => name,
        }
    }

    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Binary => Metric::OneMinusAuc,
            Task::Multiclass => Metric::LogLoss,
            Task::Regression => Metric::OneMinusR2,
        }
    }

    pub fn supports(&self, task: Task) -> bool {
        match self {
            Metric::OneMinusAuc | Metric::LogLoss => task.is_classification(),
            Metric::OneMinusR2 | Metric::Mse | Metric::QerrorP95 => task == Task::Regression,
            Metric::Custom { .. } => true,
        }
    }

    pub fn error(&self, predictions: &Predictions, labels: &[f64]) -> Result<f64> {
        if predictions.len() != labels.len() {
            return Err(Error::Metric(format!(
                "{} predictions for {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::Metric("no instances to score".into()));
        }
        match self {
            Metric::OneMinusAuc => one_minus_auc(predictions, labels),
            Metric::LogLoss => log_loss(predictions, labels),
            Metric::OneMinusR2 => one_minus_r2(&values(predictions)?, labels),
            Metric::Mse => Ok(mse(&values(predictions)?, labels)),
            Metric::QerrorP95 => Ok(qerror_percentile(&values(predictions)?, labels, 95)),
            Metric::Custom { func, .. } => func(predictions, labels),
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "one_minus_auc" | "auc" => Metric::OneMinusAuc,
            "log_loss" => Metric::LogLoss,
            "one_minus_r2" | "r2" => Metric::OneMinusR2,
            "mse" => Metric::Mse,
            "qerror_p95" | "qerror" => Metric::QerrorP95,
            other => return Err(format!("unknown metric {other:?}")),
        })
    }
}

fn values(p: &Predictions) -> Result<Vec<f64>> {
    match p {
        Predictions::Values(v) => Ok(v.clone()),
        Predictions::Proba(_) => Err(Error::Metric(
            "regression metric given class probabilities".into(),
        )),
    }
}

const PROB_CLAMP: f64 = 1e-15;

fn log_loss(p: &Predictions, labels: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let class = y as usize;
        let prob = match p {
            Predictions::Proba(m) => *m
                .get((i, class))
                .ok_or_else(|| Error::Metric(format!("label {class} has no probability column")))?,
            Predictions::Values(v) => match class {
                0 => 1.0 - v[i],
                1 => v[i],
                _ => return Err(Error::Metric("value predictions only carry two classes".into())),
            },
        };
        total -= prob.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln();
    }
    Ok(total / labels.len() as f64)
}

/// 1 - AUC. Binary problems score class 1; multiclass averages
/// one-vs-rest AUC over classes that have both positives and negatives.
fn one_minus_auc(p: &Predictions, labels: &[f64]) -> Result<f64> {
    let n_cols = p.n_score_columns();
    let classes: Vec<usize> = if n_cols <= 2 { vec![1] } else { (0..n_cols).collect() };
    let mut sum = 0.0;
    let mut used = 0;
    for c in classes {
        let positive: Vec<bool> = labels.iter().map(|&y| y as usize == c).collect();
        let pos = positive.iter().filter(|&&b| b).count();
        if pos == 0 || pos == labels.len() {
            continue;
        }
        sum += auc(&p.class_scores(c)?, &positive);
        used += 1;
    }
    if used == 0 {
        return Err(Error::Metric("AUC undefined: labels contain a single class".into()));
    }
    Ok(1.0 - sum / used as f64)
}

/// Mann-Whitney rank statistic with average ranks for ties.
pub(crate) fn auc(scores: &[f64], positive: &[bool]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their average
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if positive[k] {
                rank_sum_pos += avg;
            }
        }
        i = j + 1;
    }
    let n_pos = positive.iter().filter(|&&b| b).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    (rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg)
}

fn one_minus_r2(pred: &[f64], labels: &[f64]) -> Result<f64> {
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    let sst: f64 = labels.iter().map(|y| (y - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::Metric("r2 undefined: constant labels".into()));
    }
    let sse: f64 = pred.iter().zip(labels).map(|(p, y)| (p - y).powi(2)).sum();
    Ok(sse / sst)
}

fn mse(pred: &[f64], labels: &[f64]) -> f64 {
    pred.iter().zip(labels).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / labels.len() as f64
}

/// Pairwise q-error max(p/y, y/p) with both sides floored at 1.
pub fn qerror(pred: f64, label: f64) -> f64 {
    let p = pred.max(1.0);
    let y = label.max(1.0);
    (p / y).max(y / p)
}

fn qerror_percentile(pred: &[f64], labels: &[f64], pct: usize) -> f64 {
    let q: Vec<f64> = pred.iter().zip(labels).map(|(&p, &y)| qerror(p, y)).collect();
    nearest_rank(q, pct)
}

/// Nearest-rank percentile: the value at 1-based rank ceil(pct/100 * n).
pub fn nearest_rank(mut values: Vec<f64>, pct: usize) -> f64 {
    assert!(!values.is_empty() && pct <= 100);
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let rank = ((pct * n).div_ceil(100)).max(1);
    values[rank - 1]
}
