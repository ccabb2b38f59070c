//! Synthetic (learner, config, sample size, resampling) -> (error, cost)
//! landscapes for exercising the scheduler without training anything.
//!
//! For arm `l`, unit point `x` and sample fraction `t = s / full`, with
//! `g = t^(-1/2) - 1`:
//!
//! ```text
//! error = base + amp * |x - x*(t)|^2 + floor * g + noise * hash(l, x)
//! cost  = unit * s * (1 + kappa * x[0])          (times (k-1)/(1-rho) under cv)
//! x*(t) = optimum, except x*[0] = max(c_min, optimum[0] - shift * g)
//! ```
//!
//! Coordinate 0 is the complexity coordinate: its optimum moves up as the
//! sample grows, and trial cost grows with it. Error never increases with
//! `s` as long as `2 * amp * shift * optimum[0] <= floor`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::{search, Arm, Evaluator, Policy, SearchOptions, SearchOutcome};
use crate::dataset::{ResamplingPlan, DEFAULT_FOLDS, DEFAULT_HOLDOUT_RATIO};
use crate::error::{Error, Result};
use crate::proposers::{choose_resampling, BudgetContext};
use crate::space::{Config, SearchSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmParams {
    pub name: String,
    pub cost_constant: f64,
    pub init: Vec<f64>,
    pub optimum: Vec<f64>,
    pub base: f64,
    pub amp: f64,
    pub floor: f64,
    pub shift: f64,
    #[serde(default)]
    pub c_min: f64,
    /// Seconds per training instance at zero complexity.
    pub unit: f64,
    pub kappa: f64,
    #[serde(default)]
    pub noise: f64,
}

impl ArmParams {
    pub fn dim(&self) -> usize {
        self.optimum.len()
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("arm {}: {m}", self.name)));
        if self.optimum.is_empty() || self.init.len() != self.optimum.len() {
            return bad("init and optimum need the same non-zero length");
        }
        let in_cube = |v: &[f64]| v.iter().all(|x| (0.0..=1.0).contains(x));
        if !in_cube(&self.init) || !in_cube(&self.optimum) || !(0.0..=1.0).contains(&self.c_min) {
            return bad("points must lie in the unit cube");
        }
        if self.amp < 0.0 || self.floor < 0.0 || self.shift < 0.0 || self.noise < 0.0 {
            return bad("amp, floor, shift and noise must be non-negative");
        }
        if self.unit <= 0.0 || self.kappa < 0.0 || self.cost_constant <= 0.0 {
            return bad("unit and cost_constant must be positive, kappa non-negative");
        }
        if 2.0 * self.amp * self.shift * self.optimum[0] > self.floor + 1e-12 {
            return bad("shift too large: error would grow with the sample size");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub full_size: usize,
    /// Only used by the resampling rule.
    #[serde(default = "default_features")]
    pub n_features: usize,
    #[serde(default = "default_folds")]
    pub k: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    pub arms: Vec<ArmParams>,
}

fn default_features() -> usize {
    10
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

fn default_rho() -> f64 {
    DEFAULT_HOLDOUT_RATIO
}

impl Default for Landscape {
    /// A cheap, mediocre arm and an expensive, strong one.
    fn default() -> Self {
        Landscape {
            full_size: 1_000_000,
            n_features: default_features(),
            k: DEFAULT_FOLDS,
            rho: DEFAULT_HOLDOUT_RATIO,
            arms: vec![
                ArmParams {
                    name: "cheap".into(),
                    cost_constant: 1.0,
                    init: vec![0.0, 0.5, 0.5],
                    optimum: vec![0.8, 0.3, 0.7],
                    base: 0.20,
                    amp: 0.3,
                    floor: 0.006,
                    shift: 0.012,
                    c_min: 0.1,
                    unit: 1e-6,
                    kappa: 49.0,
                    noise: 0.0,
                },
                ArmParams {
                    name: "strong".into(),
                    cost_constant: 4.0,
                    init: vec![0.0, 0.5, 0.5],
                    optimum: vec![1.0, 0.4, 0.2],
                    base: 0.10,
                    amp: 0.3,
                    floor: 0.008,
                    shift: 0.013,
                    c_min: 0.1,
                    unit: 8e-6,
                    kappa: 49.0,
                    noise: 0.0,
                },
            ],
        }
    }
}

impl Landscape {
    pub fn validate(&self) -> Result<()> {
        if self.full_size == 0 || self.arms.is_empty() {
            return Err(Error::InvalidConfig("landscape needs a full size and at least one arm".into()));
        }
        ResamplingPlan::Cv { k: self.k }.validate()?;
        ResamplingPlan::Holdout { rho: self.rho }.validate()?;
        self.arms.iter().try_for_each(ArmParams::validate)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let l: Landscape = toml::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        l.validate()?;
        Ok(l)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    fn arm_index(&self, name: &str) -> Result<usize> {
        self.arms
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::UnknownLearner(name.to_string()))
    }

    pub fn optimum_complexity(&self, arm: usize, sample_size: usize) -> f64 {
        let a = &self.arms[arm];
        a.optimum[0] - a.shift * self.gap(sample_size)
    }

    fn gap(&self, sample_size: usize) -> f64 {
        let t = sample_size as f64 / self.full_size as f64;
        t.powf(-0.5) - 1.0
    }

    pub fn error_at(&self, arm: usize, x: &[f64], sample_size: usize) -> f64 {
        let a = &self.arms[arm];
        let g = self.gap(sample_size);
        let mut sq = 0.0;
        for (i, (&xi, &oi)) in x.iter().zip(&a.optimum).enumerate() {
            let target = if i == 0 { (oi - a.shift * g).max(a.c_min) } else { oi };
            sq += (xi - target).powi(2);
        }
        a.base + a.amp * sq + a.floor * g + a.noise * unit_hash(arm, x)
    }

    pub fn cost_at(&self, arm: usize, x: &[f64], sample_size: usize, plan: ResamplingPlan) -> f64 {
        let a = &self.arms[arm];
        let holdout = a.unit * sample_size as f64 * (1.0 + a.kappa * x[0]);
        if plan.is_cv() {
            holdout * cv_factor(self.k, self.rho)
        } else {
            holdout
        }
    }

    /// Error and cost of a named arm at a unit point.
    pub fn evaluate(&self, learner: &str, x: &[f64], sample_size: usize, plan: ResamplingPlan) -> Result<(f64, f64)> {
        let arm = self.arm_index(learner)?;
        if x.len() != self.arms[arm].dim() {
            return Err(Error::ColumnMismatch {
                expected: self.arms[arm].dim(),
                actual: x.len(),
            });
        }
        if sample_size == 0 || sample_size > self.full_size {
            return Err(Error::SampleSizeOutOfRange {
                requested: sample_size,
                available: self.full_size,
            });
        }
        Ok((self.error_at(arm, x, sample_size), self.cost_at(arm, x, sample_size, plan)))
    }

    pub fn arms_for_search(&self) -> Result<Vec<Arm>> {
        self.arms
            .iter()
            .map(|a| {
                Ok(Arm {
                    name: a.name.clone(),
                    cost_constant: a.cost_constant,
                    space: SearchSpace::unit_cube(a.dim(), &a.init)?,
                })
            })
            .collect()
    }
}

/// Cost of k-fold cross-validation relative to a holdout with ratio `rho`.
pub fn cv_factor(k: usize, rho: f64) -> f64 {
    (k as f64 - 1.0) / (1.0 - rho)
}

/// Deterministic value in [0, 1) from the arm and the exact point.
fn unit_hash(arm: usize, x: &[f64]) -> f64 {
    let mut h = 0x9e37_79b9_7f4a_7c15u64 ^ arm as u64;
    for v in x {
        h = splitmix(h ^ v.to_bits());
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Evaluates trials on a landscape and advances a synthetic clock.
#[derive(Debug, Clone)]
pub struct SurrogateEvaluator<'a> {
    landscape: &'a Landscape,
    clock: f64,
}

impl<'a> SurrogateEvaluator<'a> {
    pub fn new(landscape: &'a Landscape) -> Self {
        SurrogateEvaluator { landscape, clock: 0.0 }
    }
}

impl Evaluator for SurrogateEvaluator<'_> {
    fn evaluate(
        &mut self,
        arm: usize,
        config: &Config,
        sample_size: usize,
        plan: ResamplingPlan,
        _trial: u64,
    ) -> Result<(f64, f64)> {
        let x: Vec<f64> = (0..self.landscape.arms[arm].dim())
            .map(|i| {
                config
                    .get(&format!("x{i}"))
                    .and_then(|v| v.as_f64())
                    .ok_or_else(|| Error::InvalidConfig(format!("missing coordinate x{i}")))
            })
            .collect::<Result<_>>()?;
        let (error, cost) = self.landscape.evaluate(&self.landscape.arms[arm].name, &x, sample_size, plan)?;
        self.clock += cost;
        Ok((error, cost))
    }

    fn elapsed(&self) -> f64 {
        self.clock
    }
}

/// Runs the search on a landscape under `policy` with a synthetic budget.
pub fn replay(policy: Policy, landscape: &Landscape, budget_secs: f64, seed: u64) -> Result<SearchOutcome> {
    landscape.validate()?;
    let arms = landscape.arms_for_search()?;
    let plan = match choose_resampling(&BudgetContext {
        budget_secs,
        n_instances: landscape.full_size,
        n_features: landscape.n_features,
    }) {
        ResamplingPlan::Cv { .. } => ResamplingPlan::Cv { k: landscape.k },
        ResamplingPlan::Holdout { .. } => ResamplingPlan::Holdout { rho: landscape.rho },
    };
    let plan = if policy == Policy::Cv {
        ResamplingPlan::Cv { k: landscape.k }
    } else {
        plan
    };
    let mut evaluator = SurrogateEvaluator::new(landscape);
    search(
        &arms,
        landscape.full_size,
        &mut evaluator,
        &SearchOptions {
            budget_secs,
            seed,
            plan,
            policy,
            ..SearchOptions::default()
        },
    )
}

/// Writes `elapsed,best_error` rows.
pub fn write_curve(curve: &[(f64, f64)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Serde(e.to_string()))?;
    let result = (|| {
        w.write_record(["elapsed", "best_error"])?;
        for (t, e) in curve {
            w.write_record([t.to_string(), e.to_string()])?;
        }
        w.flush()?;
        Ok::<_, csv::Error>(())
    })();
    result.map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
}
