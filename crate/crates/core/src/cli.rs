//! Command-line front end: `fit`, `predict` and `replay`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::controller::{self, fit, FitOptions, Policy, ResampleChoice};
use crate::dataset::{load_csv, load_features, LabelColumn, Task};
use crate::learners::SavedModel;
use crate::metrics::{Metric, Predictions};
use crate::space::{Config, SpaceOverrides};
use crate::surrogate::{replay, write_curve, Landscape};

#[derive(Debug, Parser)]
#[command(name = "frugal", version, about = "Budgeted search over learners, hyperparameters and sample sizes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for the best model on a CSV file within a time budget.
    Fit(FitArgs),
    /// Predict with a model saved by `fit --model-out`.
    Predict(PredictArgs),
    /// Run search policies on a synthetic landscape and write anytime curves.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub task: Task,
    /// Label column name, or `#<index>`.
    #[arg(long, default_value = "label")]
    pub label: String,
    /// Defaults to one_minus_auc, log_loss or one_minus_r2 by task.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long, default_value_t = 60.0)]
    pub budget_secs: f64,
    /// Comma-separated learner names; all learners supporting the task by default.
    #[arg(long, value_delimiter = ',')]
    pub learners: Option<Vec<String>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trial log, one JSON object per line.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value = "auto")]
    pub resample: ResampleChoice,
    #[arg(long, default_value_t = crate::eci::DEFAULT_GAP_FACTOR)]
    pub gap_factor: f64,
    #[arg(long, default_value_t = crate::proposers::INITIAL_SAMPLE_SIZE)]
    pub min_sample: usize,
    #[arg(long, default_value_t = crate::eci::DEFAULT_SAMPLE_FACTOR)]
    pub sample_factor: f64,
    #[arg(long)]
    pub max_trials: Option<usize>,
    /// Scored with the chosen metric after the search.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Writes the run summary as JSON.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    /// TOML file with `[space.<learner>.<dim>]` overrides.
    #[arg(long)]
    pub space_config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Column to ignore when the file also carries labels.
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long, value_delimiter = ',', default_value = "flaml,roundrobin,fulldata,cv")]
    pub policies: Vec<Policy>,
    /// Synthetic seconds.
    #[arg(long, default_value_t = 10_000.0)]
    pub budget: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// TOML landscape; the built-in two-arm landscape by default.
    #[arg(long)]
    pub landscape: Option<PathBuf>,
    /// Also write each policy's trial log here.
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
}

/// What `fit --model-out` writes.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub task: Task,
    pub class_names: Vec<String>,
    pub model: SavedModel,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FitSummary {
    pub learner: String,
    pub config: Config,
    pub sample_size: usize,
    pub resample: crate::dataset::ResamplingPlan,
    pub metric: String,
    pub best_validation_error: f64,
    pub test_error: Option<f64>,
    pub trials: usize,
    pub warnings: Vec<String>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Predict(a) => run_predict(a),
        Command::Replay(a) => run_replay(a),
    }
}

fn run_fit(a: FitArgs) -> anyhow::Result<()> {
    if !(a.budget_secs > 0.0) {
        bail!("--budget-secs must be positive");
    }
    if a.learners.as_ref().is_some_and(Vec::is_empty) {
        bail!("--learners must name at least one learner");
    }
    let label: LabelColumn = a.label.parse().expect("infallible");
    let data = load_csv(&a.train, a.task, &label)?;
    let metric = match &a.metric {
        Some(m) => m.parse::<Metric>().map_err(anyhow::Error::msg)?,
        None => Metric::default_for(a.task),
    };
    let overrides = match &a.space_config {
        Some(p) => SpaceOverrides::from_toml(&read(p)?)?,
        None => SpaceOverrides::default(),
    };
    let opts = FitOptions {
        metric: Some(metric.clone()),
        learners: a.learners.clone(),
        overrides,
        resample: a.resample,
        seed: a.seed,
        gap_factor: a.gap_factor,
        sample_factor: a.sample_factor,
        min_sample: a.min_sample,
        max_trials: a.max_trials,
        ..FitOptions::default()
    };
    let result = fit(&data, a.budget_secs, &opts)?;
    for w in &result.warnings {
        log::warn!("{w}");
    }
    if let Some(p) = &a.log {
        controller::write_log(&result.trials, p)?;
    }

    let test_error = match &a.test {
        Some(p) => {
            let test = load_csv(p, a.task, &label)?.relabel(data.class_names())?;
            let pred = result.predict(test.features())?;
            Some(metric.error(&pred, test.labels())?)
        }
        None => None,
    };
    if let Some(p) = &a.model_out {
        let saved = result
            .best_model
            .to_saved()
            .context("the best model cannot be serialized")?;
        let file = ModelFile {
            task: a.task,
            class_names: data.class_names().to_vec(),
            model: saved,
        };
        write(p, &serde_json::to_string(&file)?)?;
    }

    let summary = FitSummary {
        learner: result.best_config.learner.clone(),
        config: result.best_config.config.clone(),
        sample_size: result.best_config.sample_size,
        resample: result.best_config.resample,
        metric: result.metric.clone(),
        best_validation_error: result.best_validation_error,
        test_error,
        trials: result.trials.len(),
        warnings: result.warnings.clone(),
    };
    let text = serde_json::to_string_pretty(&summary)?;
    if let Some(p) = &a.summary {
        write(p, &text)?;
    }
    println!("{text}");
    Ok(())
}

fn run_predict(a: PredictArgs) -> anyhow::Result<()> {
    let file: ModelFile = serde_json::from_str(&read(&a.model)?)
        .with_context(|| format!("{} is not a saved model", a.model.display()))?;
    let drop = a.label.as_deref().map(|l| l.parse::<LabelColumn>().expect("infallible"));
    let x = load_features(&a.test, drop.as_ref())?;
    let model = file.model.into_model();
    let pred = model.predict(x.view())?;

    let mut w = csv::Writer::from_path(&a.out).with_context(|| format!("cannot write {}", a.out.display()))?;
    match &pred {
        Predictions::Values(v) => {
            w.write_record(["prediction"])?;
            for y in v {
                w.write_record([y.to_string()])?;
            }
        }
        Predictions::Proba(p) => {
            let mut header = vec!["prediction".to_string()];
            header.extend(file.class_names.iter().map(|c| format!("p_{c}")));
            w.write_record(&header)?;
            for (row, class) in p.rows().into_iter().zip(pred.point()) {
                let mut rec = vec![file.class_names[class as usize].clone()];
                rec.extend(row.iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn run_replay(a: ReplayArgs) -> anyhow::Result<()> {
    if a.policies.is_empty() {
        bail!("--policies must name at least one policy");
    }
    if !(a.budget > 0.0) {
        bail!("--budget must be positive");
    }
    let landscape = match &a.landscape {
        Some(p) => Landscape::load(p)?,
        None => Landscape::default(),
    };
    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    if let Some(d) = &a.log_dir {
        fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
    }
    for policy in &a.policies {
        let outcome = replay(*policy, &landscape, a.budget, a.seed)?;
        let curve_path = a.out_dir.join(format!("{policy}.csv"));
        write_curve(&outcome.curve(), &curve_path)?;
        if let Some(d) = &a.log_dir {
            controller::write_log(&outcome.trials, d.join(format!("{policy}.jsonl")))?;
        }
        let best = outcome.best_trial();
        println!(
            "{policy}: {} trials, best error {} ({}) -> {}",
            outcome.trials.len(),
            best.error,
            best.learner,
            curve_path.display()
        );
    }
    Ok(())
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
