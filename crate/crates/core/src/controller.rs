//! The search loop: pick a learner, pick a sample size or a new
//! configuration, run one trial, update the bookkeeping, repeat until the
//! budget runs out or every learner has converged.
//!
//! [`search`] drives any [`Evaluator`]; [`fit`] wires it to real learners on
//! a dataset, and the surrogate module wires it to synthetic landscapes.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::dataset::{shuffle, Dataset, Fold, ResamplingPlan, DEFAULT_FOLDS, DEFAULT_HOLDOUT_RATIO};
use crate::eci::{self, LearnerState, DEFAULT_GAP_FACTOR, DEFAULT_SAMPLE_FACTOR};
use crate::error::{Error, Result};
use crate::learners::{evaluate, evaluate_split, train, LearnerRegistry, LearnerSpec, Model};
use crate::localsearch::{LocalSearch, LocalSearchConfig};
use crate::metrics::{Metric, Predictions};
use crate::proposers::{
    choose_resampling, choose_step, initial_sample_size, next_sample_size, BudgetContext, Step,
    INITIAL_SAMPLE_SIZE,
};
use crate::rng::{search_stream, stream, substream, training_seed};
use crate::space::{Config, SearchSpace, SpaceOverrides};

/// How learners, sample sizes and resampling are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// ECI-based learner sampling with sample-size escalation.
    Flaml,
    /// Learners in rotation instead of by ECI.
    RoundRobin,
    /// Every trial on the full training data.
    FullData,
    /// Cross-validation regardless of data size.
    Cv,
    /// Learners uniformly at random.
    Random,
}

impl Policy {
    pub const ALL: [Policy; 5] = [
        Policy::Flaml,
        Policy::RoundRobin,
        Policy::FullData,
        Policy::Cv,
        Policy::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Flaml => "flaml",
            Policy::RoundRobin => "roundrobin",
            Policy::FullData => "fulldata",
            Policy::Cv => "cv",
            Policy::Random => "random",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown policy `{s}`")))
    }
}

/// A learner as seen by the search loop.
#[derive(Debug, Clone)]
pub struct Arm {
    pub name: String,
    pub cost_constant: f64,
    pub space: SearchSpace,
}

/// Runs trials. `elapsed` is wall-clock seconds in real mode and the sum of
/// synthetic costs in surrogate mode.
pub trait Evaluator {
    /// Returns `(validation error, cost in seconds)`. `trial` counts this
    /// arm's previous trials.
    fn evaluate(
        &mut self,
        arm: usize,
        config: &Config,
        sample_size: usize,
        plan: ResamplingPlan,
        trial: u64,
    ) -> Result<(f64, f64)>;

    fn elapsed(&self) -> f64;
}

/// Local-search initial stepsize is `DEFAULT_STEP_SCALE * sqrt(d)`.
pub const DEFAULT_STEP_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub budget_secs: f64,
    pub seed: u64,
    pub gap_factor: f64,
    pub sample_factor: f64,
    pub min_sample: usize,
    pub plan: ResamplingPlan,
    pub policy: Policy,
    /// Multiplies the local-search initial stepsize and its lower bound.
    pub step_scale: f64,
    /// Automatic restarts per learner; a learner that converges once more
    /// is retired.
    pub max_restarts: u32,
    pub max_trials: Option<usize>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            budget_secs: 60.0,
            seed: 0,
            gap_factor: DEFAULT_GAP_FACTOR,
            sample_factor: DEFAULT_SAMPLE_FACTOR,
            min_sample: INITIAL_SAMPLE_SIZE,
            plan: ResamplingPlan::holdout(),
            policy: Policy::Flaml,
            step_scale: DEFAULT_STEP_SCALE,
            max_restarts: 1,
            max_trials: None,
        }
    }
}

/// ECI of the chosen learner when it was chosen; `eci2` is `None` when
/// infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EciSnapshot {
    pub eci1: f64,
    pub eci2: Option<f64>,
    pub eci: f64,
}

/// One line of the trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub iter: usize,
    /// Elapsed seconds when the trial finished.
    pub time: f64,
    pub learner: String,
    pub config: Config,
    pub sample_size: usize,
    pub resample: ResamplingPlan,
    pub error: f64,
    pub cost: f64,
    /// The trial set a new overall best.
    pub improved: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eci: Option<EciSnapshot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_error: Option<f64>,
}

/// A learner with a configuration, a sample size and a resampling plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningConfiguration {
    pub learner: String,
    pub config: Config,
    pub sample_size: usize,
    pub resample: ResamplingPlan,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub trials: Vec<TrialRecord>,
    /// Index into `trials` of the best trial.
    pub best: usize,
    pub best_arm: usize,
    pub warnings: Vec<String>,
}

impl SearchOutcome {
    pub fn best_trial(&self) -> &TrialRecord {
        &self.trials[self.best]
    }

    /// `(finish time, best error so far)` after every trial.
    pub fn curve(&self) -> Vec<(f64, f64)> {
        anytime_curve(&self.trials)
    }
}

pub fn anytime_curve(trials: &[TrialRecord]) -> Vec<(f64, f64)> {
    let mut best = f64::INFINITY;
    trials
        .iter()
        .map(|t| {
            best = best.min(t.error);
            (t.time, best)
        })
        .collect()
}

/// Best error reached by `time` on a curve; infinite before the first trial.
pub fn best_at(curve: &[(f64, f64)], time: f64) -> f64 {
    let i = curve.partition_point(|&(t, _)| t <= time);
    if i == 0 { f64::INFINITY } else { curve[i - 1].1 }
}

struct ArmState {
    bookkeeping: LearnerState,
    search: LocalSearch,
    /// Unit point and error of the local-search incumbent.
    incumbent: Option<(Vec<f64>, f64)>,
    restarts: u32,
    restart_pending: bool,
    retired: bool,
    trials: u64,
}

/// Runs the search loop over `arms`, whose full training size is
/// `full_size`. The first trial is always the init configuration of the arm
/// with the lowest cost constant, even when the budget is already spent.
pub fn search(
    arms: &[Arm],
    full_size: usize,
    evaluator: &mut dyn Evaluator,
    opts: &SearchOptions,
) -> Result<SearchOutcome> {
    if arms.is_empty() {
        return Err(Error::NoLearner("no learners to search".into()));
    }
    if !(opts.budget_secs > 0.0) {
        return Err(Error::InvalidConfig("budget must be positive".into()));
    }
    if full_size == 0 {
        return Err(Error::EmptyDataset);
    }
    let plan = if opts.policy == Policy::Cv && !opts.plan.is_cv() {
        ResamplingPlan::cv()
    } else {
        opts.plan
    };
    plan.validate()?;
    let pinned_full = plan.is_cv() || opts.policy == Policy::FullData;
    let start_size = if pinned_full {
        full_size
    } else {
        initial_sample_size(opts.min_sample, full_size)
    };

    let mut states = Vec::with_capacity(arms.len());
    for (i, arm) in arms.iter().enumerate() {
        let center = arm.space.to_unit(arm.space.init())?;
        let mut ls = LocalSearch::new(
            center,
            LocalSearchConfig::scaled(arm.space.dim(), opts.step_scale),
            search_stream(opts.seed, i),
        );
        ls.set_adjustment_enabled(start_size >= full_size);
        states.push(ArmState {
            bookkeeping: LearnerState::new(arm.cost_constant, start_size, full_size),
            search: ls,
            incumbent: None,
            restarts: 0,
            restart_pending: false,
            retired: false,
            trials: 0,
        });
    }
    let books: Vec<LearnerState> = states.iter().map(|s| s.bookkeeping.clone()).collect();
    let first = eci::fastest(&books).expect("arms is non-empty");

    let mut sampler = substream(opts.seed, stream::SAMPLER);
    let mut trials: Vec<TrialRecord> = Vec::new();
    let mut warnings = Vec::new();
    let mut best = (0usize, f64::INFINITY, first);
    let mut rotation = first;

    loop {
        let n = trials.len();
        if n > 0 {
            if opts.max_trials.is_some_and(|m| n >= m) || evaluator.elapsed() >= opts.budget_secs {
                break;
            }
            if states.iter().all(|s| s.retired) {
                break;
            }
        }
        let best_error = best.1;
        let ecis: Vec<Option<eci::EciEstimate>> = states
            .iter()
            .map(|s| {
                if n == 0 || s.retired {
                    return None;
                }
                eci::estimate(&s.bookkeeping, best_error, opts.sample_factor, opts.gap_factor).ok()
            })
            .collect();

        let a = if n == 0 {
            first
        } else {
            match opts.policy {
                Policy::RoundRobin => {
                    let mut next = rotation;
                    loop {
                        next = (next + 1) % arms.len();
                        if !states[next].retired {
                            break next;
                        }
                    }
                }
                Policy::Random => {
                    use rand::Rng;
                    let active: Vec<usize> = (0..arms.len()).filter(|&i| !states[i].retired).collect();
                    active[sampler.random_range(0..active.len())]
                }
                _ => {
                    let weights: Vec<Option<f64>> = ecis.iter().map(|e| e.map(|e| e.eci)).collect();
                    eci::sample_learner(&weights, &mut sampler)?
                }
            }
        };
        rotation = a;
        let snapshot = ecis[a].map(|e| EciSnapshot {
            eci1: e.eci1,
            eci2: e.eci2.is_finite().then_some(e.eci2),
            eci: e.eci,
        });

        let st = &mut states[a];
        let space = &arms[a].space;
        // (unit point, becomes incumbent unconditionally, is a local-search proposal)
        let (point, reset_incumbent, proposal) = if !st.bookkeeping.tried || st.restart_pending {
            st.restart_pending = false;
            (st.search.center().to_vec(), true, false)
        } else {
            match choose_step(&st.bookkeeping, opts.sample_factor)? {
                Step::IncreaseSample => {
                    let s = next_sample_size(st.bookkeeping.sample_size, opts.sample_factor, full_size);
                    st.bookkeeping.sample_size = s;
                    st.search.set_adjustment_enabled(s >= full_size);
                    let (p, _) = st.incumbent.clone().expect("tried arm has an incumbent");
                    (p, true, false)
                }
                Step::NewConfig => (st.search.propose()?, false, true),
            }
        };
        let config = space.from_unit(&point);
        let sample_size = st.bookkeeping.sample_size;
        let (error, cost) = evaluator.evaluate(a, &config, sample_size, plan, st.trials)?;
        if !error.is_finite() {
            return Err(Error::Metric(format!("{} produced a non-finite error", arms[a].name)));
        }
        let cost = cost.max(f64::MIN_POSITIVE);
        st.trials += 1;
        st.bookkeeping.record_trial(cost, error);

        if proposal {
            let improved = st.incumbent.as_ref().is_none_or(|(_, e)| error < *e);
            st.search.report(&point, improved)?;
            if improved {
                st.incumbent = Some((point, error));
                st.bookkeeping.last_cost = cost;
            }
            if st.search.is_converged() {
                if st.restarts < opts.max_restarts {
                    st.search.restart()?;
                    st.restarts += 1;
                    st.restart_pending = true;
                    st.bookkeeping.sample_size = start_size;
                    st.search.set_adjustment_enabled(start_size >= full_size);
                } else {
                    st.retired = true;
                }
            }
        } else if reset_incumbent {
            st.incumbent = Some((point, error));
            st.bookkeeping.last_cost = cost;
        }

        let improved = error < best.1;
        if improved {
            best = (n, error, a);
        }
        trials.push(TrialRecord {
            iter: n,
            time: evaluator.elapsed(),
            learner: arms[a].name.clone(),
            config,
            sample_size,
            resample: plan,
            error,
            cost,
            improved,
            eci: snapshot,
            test_error: None,
        });
        if n == 0 {
            let kappa0 = cost;
            let mut books: Vec<LearnerState> = states.iter().map(|s| s.bookkeeping.clone()).collect();
            eci::bootstrap_untried(&mut books, kappa0)?;
            for (s, b) in states.iter_mut().zip(books) {
                s.bookkeeping.bootstrap_eci1 = b.bootstrap_eci1;
            }
            if evaluator.elapsed() >= opts.budget_secs {
                warnings.push(format!(
                    "budget of {}s exhausted by the first trial; result is the initial configuration of {}",
                    opts.budget_secs, arms[a].name
                ));
            }
        }
    }

    Ok(SearchOutcome {
        trials,
        best: best.0,
        best_arm: best.2,
        warnings,
    })
}

/// Which resampling strategy to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleChoice {
    /// Cross-validation for small data and generous budgets, holdout otherwise.
    #[default]
    Auto,
    Cv,
    Holdout,
}

impl FromStr for ResampleChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(ResampleChoice::Auto),
            "cv" => Ok(ResampleChoice::Cv),
            "holdout" => Ok(ResampleChoice::Holdout),
            other => Err(Error::InvalidConfig(format!("unknown resampling strategy `{other}`"))),
        }
    }
}

#[derive(Clone)]
pub struct FitOptions {
    /// Defaults to the task's metric.
    pub metric: Option<Metric>,
    /// Defaults to every registered learner supporting the task.
    pub learners: Option<Vec<String>>,
    pub registry: LearnerRegistry,
    pub overrides: SpaceOverrides,
    pub resample: ResampleChoice,
    pub seed: u64,
    pub gap_factor: f64,
    pub sample_factor: f64,
    pub min_sample: usize,
    pub policy: Policy,
    pub step_scale: f64,
    pub max_restarts: u32,
    pub max_trials: Option<usize>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            metric: None,
            learners: None,
            registry: LearnerRegistry::builtin(),
            overrides: SpaceOverrides::default(),
            resample: ResampleChoice::Auto,
            seed: 0,
            gap_factor: DEFAULT_GAP_FACTOR,
            sample_factor: DEFAULT_SAMPLE_FACTOR,
            min_sample: INITIAL_SAMPLE_SIZE,
            policy: Policy::Flaml,
            step_scale: DEFAULT_STEP_SCALE,
            max_restarts: 1,
            max_trials: None,
        }
    }
}

#[derive(Debug)]
pub struct FitResult {
    pub best_config: LearningConfiguration,
    /// Retrained on all training data at the best configuration.
    pub best_model: Box<dyn Model>,
    pub best_validation_error: f64,
    pub trials: Vec<TrialRecord>,
    pub warnings: Vec<String>,
    pub metric: String,
}

impl FitResult {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Predictions> {
        self.best_model.predict(x)
    }
}

enum Validation {
    Holdout {
        train: Dataset,
        valid: Dataset,
        prefixes: HashMap<usize, Dataset>,
    },
    Cv(Vec<Fold>),
}

struct DataEvaluator {
    specs: Vec<LearnerSpec>,
    metric: Metric,
    validation: Validation,
    seed: u64,
    start: Instant,
}

impl Evaluator for DataEvaluator {
    fn evaluate(
        &mut self,
        arm: usize,
        config: &Config,
        sample_size: usize,
        _plan: ResamplingPlan,
        trial: u64,
    ) -> Result<(f64, f64)> {
        let spec = &self.specs[arm];
        let seed = training_seed(self.seed, arm, trial);
        match &mut self.validation {
            Validation::Cv(folds) => evaluate(spec, config, folds, &self.metric, seed),
            Validation::Holdout {
                train: full,
                valid,
                prefixes,
            } => {
                let data = if sample_size >= full.n_instances() {
                    &*full
                } else {
                    prefixes
                        .entry(sample_size)
                        .or_insert_with(|| full.select_rows(&(0..sample_size).collect::<Vec<_>>()))
                };
                evaluate_split(spec, config, data, valid, &self.metric, seed)
            }
        }
    }

    fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

/// Searches learners and configurations on `data` within `budget_secs`
/// wall-clock seconds and retrains the best configuration on all of `data`.
pub fn fit(data: &Dataset, budget_secs: f64, opts: &FitOptions) -> Result<FitResult> {
    let start = Instant::now();
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let task = data.task();
    let metric = opts.metric.clone().unwrap_or_else(|| Metric::default_for(task));
    if !metric.supports(task) {
        return Err(Error::InvalidConfig(format!(
            "metric {} does not apply to {task} tasks",
            metric.name()
        )));
    }
    let learners = match &opts.learners {
        Some(names) => {
            let mut out = Vec::new();
            for name in names {
                let l = opts.registry.get(name)?;
                if !l.supports(task) {
                    return Err(Error::UnsupportedTask {
                        learner: name.clone(),
                        task: task.to_string(),
                    });
                }
                out.push(l);
            }
            out
        }
        None => opts.registry.for_task(task),
    };
    if learners.is_empty() {
        return Err(Error::NoLearner(format!("no learner supports {task} tasks")));
    }

    let plan = match (opts.policy, opts.resample) {
        (Policy::Cv, _) | (_, ResampleChoice::Cv) => ResamplingPlan::Cv { k: DEFAULT_FOLDS },
        (_, ResampleChoice::Holdout) => ResamplingPlan::Holdout {
            rho: DEFAULT_HOLDOUT_RATIO,
        },
        (_, ResampleChoice::Auto) => choose_resampling(&BudgetContext {
            budget_secs,
            n_instances: data.n_instances(),
            n_features: data.n_features(),
        }),
    };
    let view = shuffle(data, opts.seed);
    let folds = view.split(plan)?;
    let (validation, full_size, n_train) = match plan {
        ResamplingPlan::Cv { .. } => {
            let n_train = folds.iter().map(|f| f.train.n_instances()).min().unwrap_or(0);
            (Validation::Cv(folds), data.n_instances(), n_train)
        }
        ResamplingPlan::Holdout { .. } => {
            let fold = folds.into_iter().next().expect("holdout yields one fold");
            let n_train = fold.train.n_instances();
            (
                Validation::Holdout {
                    train: fold.train,
                    valid: fold.validation,
                    prefixes: HashMap::new(),
                },
                n_train,
                n_train,
            )
        }
    };

    let mut specs = Vec::with_capacity(learners.len());
    let mut arms = Vec::with_capacity(learners.len());
    for l in learners {
        let mut spec = LearnerSpec::new(l, n_train, task)?;
        let name = spec.name().to_string();
        opts.overrides.apply(&name, &mut spec.space)?;
        arms.push(Arm {
            name: spec.name().to_string(),
            cost_constant: spec.cost_constant(),
            space: spec.space.clone(),
        });
        specs.push(spec);
    }

    let mut evaluator = DataEvaluator {
        specs,
        metric: metric.clone(),
        validation,
        seed: opts.seed,
        start,
    };
    let outcome = search(
        &arms,
        full_size,
        &mut evaluator,
        &SearchOptions {
            budget_secs,
            seed: opts.seed,
            gap_factor: opts.gap_factor,
            sample_factor: opts.sample_factor,
            min_sample: opts.min_sample,
            plan,
            policy: opts.policy,
            step_scale: opts.step_scale,
            max_restarts: opts.max_restarts,
            max_trials: opts.max_trials,
        },
    )?;

    let best = outcome.best_trial().clone();
    let spec = &evaluator.specs[outcome.best_arm];
    let best_model = train(spec, &best.config, data, training_seed(opts.seed, outcome.best_arm, u64::MAX))?;
    log::info!(
        "{} trials; best {} {} = {}",
        outcome.trials.len(),
        best.learner,
        metric.name(),
        best.error
    );
    Ok(FitResult {
        best_config: LearningConfiguration {
            learner: best.learner,
            config: best.config,
            sample_size: best.sample_size,
            resample: best.resample,
        },
        best_model,
        best_validation_error: best.error,
        trials: outcome.trials,
        warnings: outcome.warnings,
        metric: metric.name().to_string(),
    })
}

/// The trial log as JSON lines.
pub fn log_to_string(trials: &[TrialRecord]) -> Result<String> {
    let mut out = String::new();
    for t in trials {
        out.push_str(&serde_json::to_string(t).map_err(|e| Error::Serde(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_log(trials: &[TrialRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(log_to_string(trials)?.as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::LogParse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
