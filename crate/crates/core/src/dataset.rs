//! Tabular data: CSV ingestion, one-time (stratified) shuffling, prefix
//! subsamples and resampling splits.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binary,
    Multiclass,
    Regression,
}

impl Task {
    pub fn is_classification(self) -> bool {
        !matches!(self, Task::Regression)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Binary => "binary",
            Task::Multiclass => "multiclass",
            Task::Regression => "regression",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "binary" => Ok(Task::Binary),
            "multiclass" => Ok(Task::Multiclass),
            "regression" => Ok(Task::Regression),
            other => Err(format!(
                "unknown task {other:?} (expected binary, multiclass or regression)"
            )),
        }
    }
}

/// A rectangular feature matrix with one label per row.
///
/// Classification labels are dense class indices stored as `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<f64>,
    task: Task,
    n_classes: usize,
    class_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset, inferring the class count from the labels.
    pub fn new(features: Array2<f64>, labels: Vec<f64>, task: Task) -> Result<Self> {
        let n_classes = match task {
            Task::Regression => 0,
            Task::Binary => 2,
            Task::Multiclass => labels.iter().fold(0.0f64, |m, &y| m.max(y)) as usize + 1,
        };
        let class_names = (0..n_classes).map(|c| c.to_string()).collect();
        Self::with_classes(features, labels, task, n_classes, class_names)
    }

    pub fn with_classes(
        features: Array2<f64>,
        labels: Vec<f64>,
        task: Task,
        n_classes: usize,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite feature value".into()));
        }
        if task.is_classification() {
            for (i, &y) in labels.iter().enumerate() {
                if y < 0.0 || y.fract() != 0.0 || y as usize >= n_classes {
                    return Err(Error::InvalidDataset(format!(
                        "row {i}: label {y} is not a class index in [0, {n_classes})"
                    )));
                }
            }
        } else if labels.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidDataset("non-finite regression target".into()));
        }
        Ok(Self {
            features,
            labels,
            task,
            n_classes,
            class_names,
        })
    }

    pub fn n_instances(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// Number of classes (0 for regression).
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// New dataset holding the given rows in the given order. Class metadata
    /// is kept even when some class is absent from the subset.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            task: self.task,
            n_classes: self.n_classes,
            class_names: self.class_names.clone(),
        }
    }

    /// Re-indexes class labels by name against `class_names`, e.g. to score
    /// a test file with the training set's class order.
    pub fn relabel(&self, class_names: &[String]) -> Result<Dataset> {
        if !self.task.is_classification() {
            return Ok(self.clone());
        }
        let labels = self
            .labels
            .iter()
            .map(|&y| {
                let name = &self.class_names[y as usize];
                class_names
                    .iter()
                    .position(|c| c == name)
                    .map(|i| i as f64)
                    .ok_or_else(|| Error::InvalidDataset(format!("class `{name}` was not seen in training")))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::with_classes(
            self.features.clone(),
            labels,
            self.task,
            class_names.len(),
            class_names.to_vec(),
        )
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y as usize] += 1;
        }
        counts
    }
}

/// Which column of a CSV file carries the label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.strip_prefix('#').map(str::parse::<usize>) {
            Some(Ok(i)) => LabelColumn::Index(i),
            _ => LabelColumn::Name(s.to_string()),
        })
    }
}

struct Table {
    headers: Vec<String>,
    label_idx: Option<usize>,
    features: Array2<f64>,
    raw_labels: Vec<String>,
}

fn read_table(path: &Path, label: Option<&LabelColumn>) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv {
            row: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyDataset);
    }
    let label_idx = match label {
        None => None,
        Some(LabelColumn::Name(name)) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingLabelColumn(name.clone()))?,
        ),
        Some(LabelColumn::Index(i)) if *i < headers.len() => Some(*i),
        Some(LabelColumn::Index(i)) => return Err(Error::MissingLabelColumn(format!("#{i}"))),
    };

    let n_features = headers.len() - usize::from(label_idx.is_some());
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut n = 0;
    for (i, record) in reader.records().enumerate() {
        // header is line 1
        let row = i + 2;
        let record = record.map_err(|e| Error::Csv {
            row,
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Csv {
                row,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        n += 1;
        for (j, cell) in record.iter().enumerate() {
            if Some(j) == label_idx {
                raw_labels.push(cell.to_string());
                continue;
            }
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::NonNumeric {
                    row,
                    column: headers[j].clone(),
                    value: cell.to_string(),
                }
            })?;
            values.push(v);
        }
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let features = Array2::from_shape_vec((n, n_features), values)
        .map_err(|e| Error::InvalidDataset(e.to_string()))?;
    Ok(Table {
        headers,
        label_idx,
        features,
        raw_labels,
    })
}

/// Reads every column of a CSV file as a feature, except `drop` when given.
pub fn load_features(path: impl AsRef<Path>, drop: Option<&LabelColumn>) -> Result<Array2<f64>> {
    Ok(read_table(path.as_ref(), drop)?.features)
}

/// Reads a comma-separated file with a header line. Every column except the
/// label must be numeric; classification labels are re-indexed densely from 0
/// in sorted order (numeric order when all labels parse as numbers).
pub fn load_csv(path: impl AsRef<Path>, task: Task, label: &LabelColumn) -> Result<Dataset> {
    let Table {
        headers,
        label_idx,
        features,
        raw_labels,
    } = read_table(path.as_ref(), Some(label))?;
    let label_idx = label_idx.expect("label column requested");
    let n = raw_labels.len();

    if task == Task::Regression {
        let mut labels = Vec::with_capacity(n);
        for (i, raw) in raw_labels.iter().enumerate() {
            let y: f64 = raw.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::NonNumeric {
                    row: i + 2,
                    column: headers[label_idx].clone(),
                    value: raw.clone(),
                }
            })?;
            labels.push(y);
        }
        return Dataset::with_classes(features, labels, task, 0, Vec::new());
    }

    let class_names = sorted_classes(&raw_labels);
    if task == Task::Binary && class_names.len() > 2 {
        return Err(Error::InvalidDataset(format!(
            "binary task but {} distinct labels",
            class_names.len()
        )));
    }
    let index: BTreeMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let labels = raw_labels.iter().map(|l| index[l.as_str()] as f64).collect();
    let n_classes = if task == Task::Binary { 2 } else { class_names.len() };
    let mut names = class_names;
    while names.len() < n_classes {
        names.push(names.len().to_string());
    }
    Dataset::with_classes(features, labels, task, n_classes, names)
}

fn sorted_classes(raw: &[String]) -> Vec<String> {
    let mut unique: Vec<String> = raw.to_vec();
    unique.sort();
    unique.dedup();
    let numeric: Option<Vec<f64>> = unique.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut pairs: Vec<(f64, String)> = nums.into_iter().zip(unique).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.into_iter().map(|(_, s)| s).collect()
    } else {
        unique
    }
}

/// A fixed random order over the rows of a dataset.
#[derive(Debug, Clone)]
pub struct ShuffledView<'a> {
    base: &'a Dataset,
    permutation: Vec<usize>,
    seed: u64,
}

/// Shuffles once. Classification data is stratified: each class is shuffled
/// independently and the classes are interleaved so that every prefix keeps
/// the global class proportions to within one instance.
pub fn shuffle(d: &Dataset, seed: u64) -> ShuffledView<'_> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let permutation = if d.task().is_classification() {
        let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); d.n_classes()];
        for (i, &y) in d.labels().iter().enumerate() {
            per_class[y as usize].push(i);
        }
        for rows in &mut per_class {
            rows.shuffle(&mut rng);
        }
        interleave_proportionally(per_class, d.n_instances())
    } else {
        let mut p: Vec<usize> = (0..d.n_instances()).collect();
        p.shuffle(&mut rng);
        p
    };
    ShuffledView {
        base: d,
        permutation,
        seed,
    }
}

/// At each position emits the class whose running count lags its target
/// share the most; ties go to the lower class index.
fn interleave_proportionally(groups: Vec<Vec<usize>>, n: usize) -> Vec<usize> {
    let sizes: Vec<f64> = groups.iter().map(|g| g.len() as f64).collect();
    let total = n as f64;
    let mut taken = vec![0usize; groups.len()];
    let mut out = Vec::with_capacity(n);
    for t in 1..=n {
        let mut best: Option<(usize, f64)> = None;
        for (c, g) in groups.iter().enumerate() {
            if taken[c] == g.len() {
                continue;
            }
            let deficit = t as f64 * sizes[c] / total - taken[c] as f64;
            if best.is_none_or(|(_, d)| deficit > d) {
                best = Some((c, deficit));
            }
        }
        let (c, _) = best.expect("row count matches group sizes");
        out.push(groups[c][taken[c]]);
        taken[c] += 1;
    }
    out
}

impl<'a> ShuffledView<'a> {
    pub fn base(&self) -> &'a Dataset {
        self.base
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    /// The first `s` rows of the shuffled order.
    pub fn prefix(&self, s: usize) -> Result<Dataset> {
        if s == 0 || s > self.len() {
            return Err(Error::SampleSizeOutOfRange {
                requested: s,
                available: self.len(),
            });
        }
        Ok(self.base.select_rows(&self.permutation[..s]))
    }

    /// Splits in shuffled order without reshuffling. Holdout validation rows
    /// are the tail of the order; cv cuts the order into `k` contiguous
    /// blocks, so stratified orders give stratified folds.
    pub fn split(&self, plan: ResamplingPlan) -> Result<Vec<Fold>> {
        plan.validate()?;
        let n = self.len();
        match plan {
            ResamplingPlan::Holdout { rho } => {
                if n < 2 {
                    return Err(Error::TooFewRows {
                        rows: n,
                        plan: plan.to_string(),
                    });
                }
                let n_val = holdout_size(n, rho);
                let (train, valid) = self.permutation.split_at(n - n_val);
                Ok(vec![Fold::new(self.base, train.to_vec(), valid.to_vec())])
            }
            ResamplingPlan::Cv { k } => {
                if n < k {
                    return Err(Error::TooFewRows {
                        rows: n,
                        plan: plan.to_string(),
                    });
                }
                Ok((0..k)
                    .map(|fold| {
                        let (valid, train): (Vec<(usize, usize)>, Vec<(usize, usize)>) = self
                            .permutation
                            .iter()
                            .copied()
                            .enumerate()
                            .partition(|(pos, _)| pos * k / n == fold);
                        Fold::new(
                            self.base,
                            train.into_iter().map(|(_, r)| r).collect(),
                            valid.into_iter().map(|(_, r)| r).collect(),
                        )
                    })
                    .collect())
            }
        }
    }
}

/// Validation rows reserved by a holdout split of `n` rows: `rho * n`
/// rounded, kept within `1..n`.
pub fn holdout_size(n: usize, rho: f64) -> usize {
    ((rho * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// One train/validation pair, with row indices into the base dataset.
#[derive(Debug, Clone)]
pub struct Fold {
    pub train_rows: Vec<usize>,
    pub valid_rows: Vec<usize>,
    pub train: Dataset,
    pub validation: Dataset,
}

impl Fold {
    fn new(base: &Dataset, train_rows: Vec<usize>, valid_rows: Vec<usize>) -> Self {
        Fold {
            train: base.select_rows(&train_rows),
            validation: base.select_rows(&valid_rows),
            train_rows,
            valid_rows,
        }
    }

    pub fn from_parts(train: Dataset, validation: Dataset) -> Self {
        Fold {
            train_rows: Vec::new(),
            valid_rows: Vec::new(),
            train,
            validation,
        }
    }
}

/// Splits `d` after shuffling it with `seed`.
pub fn split(d: &Dataset, plan: ResamplingPlan, seed: u64) -> Result<Vec<Fold>> {
    shuffle(d, seed).split(plan)
}

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_HOLDOUT_RATIO: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ResamplingPlan {
    Cv { k: usize },
    Holdout { rho: f64 },
}

impl ResamplingPlan {
    pub fn cv() -> Self {
        ResamplingPlan::Cv { k: DEFAULT_FOLDS }
    }

    pub fn holdout() -> Self {
        ResamplingPlan::Holdout {
            rho: DEFAULT_HOLDOUT_RATIO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ResamplingPlan::Cv { k } if k < 2 => {
                Err(Error::InvalidPlan(format!("cv needs k >= 2, got {k}")))
            }
            ResamplingPlan::Holdout { rho } if !(rho > 0.0 && rho < 1.0) => {
                Err(Error::InvalidPlan(format!("holdout ratio {rho} not in (0, 1)")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_cv(&self) -> bool {
        matches!(self, ResamplingPlan::Cv { .. })
    }
}

impl fmt::Display for ResamplingPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResamplingPlan::Cv { k } => write!(f, "{k}-fold cv"),
            ResamplingPlan::Holdout { rho } => write!(f, "holdout({rho})"),
        }
    }
}
