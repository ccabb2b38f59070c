//! Hyperparameter domains and the unit-cube embedding used by local search.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::Task;
use crate::error::{Error, Result};

/// A hyperparameter assignment, keyed by dimension name.
pub type Config = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Cat(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ParamValue::Int(v) => Some(v as f64),
            ParamValue::Float(v) => Some(v),
            ParamValue::Cat(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Cat(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Float(v) => write!(f, "{v}"),
            ParamValue::Cat(v) => f.write_str(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Float { low: f64, high: f64, scale: Scale },
    Int { low: i64, high: i64, scale: Scale },
    Categorical { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dim {
    pub name: String,
    pub domain: Domain,
    /// Trial cost grows with this dimension.
    pub cost_related: bool,
}

impl Dim {
    pub fn float(name: &str, low: f64, high: f64, scale: Scale) -> Self {
        Dim {
            name: name.into(),
            domain: Domain::Float { low, high, scale },
            cost_related: false,
        }
    }

    pub fn int(name: &str, low: i64, high: i64, scale: Scale) -> Self {
        Dim {
            name: name.into(),
            domain: Domain::Int { low, high, scale },
            cost_related: false,
        }
    }

    pub fn categorical(name: &str, choices: &[&str]) -> Self {
        Dim {
            name: name.into(),
            domain: Domain::Categorical {
                choices: choices.iter().map(|s| s.to_string()).collect(),
            },
            cost_related: false,
        }
    }

    pub fn cost_related(mut self) -> Self {
        self.cost_related = true;
        self
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("dim {}: {msg}", self.name)));
        match &self.domain {
            Domain::Float { low, high, scale } => {
                if !(low.is_finite() && high.is_finite() && low <= high) {
                    return bad(format!("bad range [{low}, {high}]"));
                }
                if *scale == Scale::Log && *low <= 0.0 {
                    return bad("log scale needs positive bounds".into());
                }
            }
            Domain::Int { low, high, scale } => {
                if low > high {
                    return bad(format!("bad range [{low}, {high}]"));
                }
                if *scale == Scale::Log && *low <= 0 {
                    return bad("log scale needs positive bounds".into());
                }
            }
            Domain::Categorical { choices } if choices.is_empty() => {
                return bad("no choices".into());
            }
            Domain::Categorical { .. } => {}
        }
        Ok(())
    }

    fn contains(&self, v: &ParamValue) -> bool {
        match (&self.domain, v) {
            (Domain::Float { low, high, .. }, ParamValue::Float(x)) => low <= x && x <= high,
            (Domain::Int { low, high, .. }, ParamValue::Int(x)) => low <= x && x <= high,
            (Domain::Categorical { choices }, ParamValue::Cat(c)) => choices.contains(c),
            _ => false,
        }
    }

    pub fn to_unit(&self, v: &ParamValue) -> Result<f64> {
        let mismatch = || Error::InvalidConfig(format!("{}: value {v} has the wrong type", self.name));
        let u = match &self.domain {
            Domain::Float { low, high, scale } => {
                let x = match v {
                    ParamValue::Float(x) => *x,
                    ParamValue::Int(x) => *x as f64,
                    _ => return Err(mismatch()),
                };
                forward(x, *low, *high, *scale)
            }
            Domain::Int { low, high, scale } => {
                let x = match v {
                    ParamValue::Int(x) => *x as f64,
                    ParamValue::Float(x) => *x,
                    _ => return Err(mismatch()),
                };
                forward(x, *low as f64, *high as f64, *scale)
            }
            Domain::Categorical { choices } => {
                let c = v.as_str().ok_or_else(mismatch)?;
                let i = choices.iter().position(|x| x == c).ok_or_else(|| {
                    Error::InvalidConfig(format!("{}: unknown choice {c:?}", self.name))
                })?;
                (i as f64 + 0.5) / choices.len() as f64
            }
        };
        Ok(u.clamp(0.0, 1.0))
    }

    /// Total: coordinates outside [0, 1] are projected onto the boundary.
    pub fn from_unit(&self, u: f64) -> ParamValue {
        let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, 1.0) };
        match &self.domain {
            Domain::Float { low, high, scale } => {
                ParamValue::Float(backward(u, *low, *high, *scale).clamp(*low, *high))
            }
            Domain::Int { low, high, scale } => {
                let x = backward(u, *low as f64, *high as f64, *scale);
                // round half up
                ParamValue::Int(((x + 0.5).floor() as i64).clamp(*low, *high))
            }
            Domain::Categorical { choices } => {
                let k = choices.len();
                // boundary ties resolve to the lower index
                let i = ((u * k as f64).ceil() as i64 - 1).clamp(0, k as i64 - 1) as usize;
                ParamValue::Cat(choices[i].clone())
            }
        }
    }
}

fn forward(x: f64, low: f64, high: f64, scale: Scale) -> f64 {
    if high == low {
        return 0.0;
    }
    match scale {
        Scale::Linear => (x - low) / (high - low),
        Scale::Log => (x.max(low).ln() - low.ln()) / (high.ln() - low.ln()),
    }
}

fn backward(u: f64, low: f64, high: f64, scale: Scale) -> f64 {
    if u <= 0.0 {
        return low;
    }
    if u >= 1.0 {
        return high;
    }
    match scale {
        Scale::Linear => low + u * (high - low),
        Scale::Log => (low.ln() + u * (high.ln() - low.ln())).exp(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    dims: Vec<Dim>,
    init: Config,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dim>, init: Config) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidConfig("search space has no dimensions".into()));
        }
        let space = SearchSpace { dims, init };
        for d in &space.dims {
            d.validate()?;
        }
        space.check(&space.init)?;
        Ok(space)
    }

    /// A [0, 1]^d space, initialised at `init`.
    pub fn unit_cube(d: usize, init: &[f64]) -> Result<Self> {
        let dims: Vec<Dim> = (0..d)
            .map(|i| Dim::float(&format!("x{i}"), 0.0, 1.0, Scale::Linear))
            .collect();
        let init = dims
            .iter()
            .zip(init)
            .map(|(dim, &v)| (dim.name.clone(), ParamValue::Float(v)))
            .collect();
        Self::new(dims, init)
    }

    pub fn dims(&self) -> &[Dim] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn init(&self) -> &Config {
        &self.init
    }

    /// Errors unless every dimension is assigned a value inside its domain.
    pub fn check(&self, config: &Config) -> Result<()> {
        for d in &self.dims {
            let v = config
                .get(&d.name)
                .ok_or_else(|| Error::InvalidConfig(format!("missing value for {}", d.name)))?;
            if !d.contains(v) {
                return Err(Error::InvalidConfig(format!("{} = {v} outside its domain", d.name)));
            }
        }
        Ok(())
    }

    pub fn to_unit(&self, config: &Config) -> Result<Vec<f64>> {
        self.dims
            .iter()
            .map(|d| {
                let v = config
                    .get(&d.name)
                    .ok_or_else(|| Error::InvalidConfig(format!("missing value for {}", d.name)))?;
                d.to_unit(v)
            })
            .collect()
    }

    pub fn from_unit(&self, point: &[f64]) -> Config {
        self.dims
            .iter()
            .zip(point)
            .map(|(d, &u)| (d.name.clone(), d.from_unit(u)))
            .collect()
    }

    /// Replaces bounds, scale or initial value of one dimension.
    pub fn apply_override(&mut self, name: &str, o: &DimOverride) -> Result<()> {
        let dim = self
            .dims
            .iter_mut()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::InvalidConfig(format!("no dimension named {name:?}")))?;
        match &mut dim.domain {
            Domain::Float { low, high, scale } => {
                if let Some(v) = o.low {
                    *low = v;
                }
                if let Some(v) = o.high {
                    *high = v;
                }
                if let Some(s) = o.scale {
                    *scale = s;
                }
            }
            Domain::Int { low, high, scale } => {
                if let Some(v) = o.low {
                    *low = v.round() as i64;
                }
                if let Some(v) = o.high {
                    *high = v.round() as i64;
                }
                if let Some(s) = o.scale {
                    *scale = s;
                }
            }
            Domain::Categorical { .. } => {
                if o.low.is_some() || o.high.is_some() || o.scale.is_some() {
                    return Err(Error::InvalidConfig(format!(
                        "{name} is categorical; only init can be overridden"
                    )));
                }
            }
        }
        dim.validate()?;
        let init = match (&o.init, &dim.domain) {
            (Some(v), Domain::Int { .. }) => ParamValue::Int(v.as_f64().unwrap_or(0.0).round() as i64),
            (Some(v), Domain::Float { .. }) => ParamValue::Float(v.as_f64().unwrap_or(f64::NAN)),
            (Some(v), Domain::Categorical { .. }) => v.clone(),
            // keep the old init, projected into the new range
            (None, _) => {
                let current = self.init[name].clone();
                dim.from_unit(dim.to_unit(&current)?)
            }
        };
        self.init.insert(name.to_string(), init);
        self.check(&self.init)
    }
}

/// Per-dimension override read from a configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DimOverride {
    pub low: Option<f64>,
    pub high: Option<f64>,
    pub scale: Option<Scale>,
    pub init: Option<ParamValue>,
}

/// `[space.<learner>.<dim>]` tables of a TOML file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SpaceOverrides {
    #[serde(default)]
    pub space: BTreeMap<String, BTreeMap<String, DimOverride>>,
}

impl SpaceOverrides {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn apply(&self, learner: &str, space: &mut SearchSpace) -> Result<()> {
        if let Some(dims) = self.space.get(learner) {
            for (name, o) in dims {
                space.apply_override(name, o)?;
            }
        }
        Ok(())
    }
}

pub const TREE_CAP: i64 = 32768;
pub const FOREST_TREE_CAP: i64 = 2048;

/// Default space of a built-in learner for `n_train` training instances.
pub fn default_space(learner: &str, n_train: usize, task: Task) -> Result<SearchSpace> {
    let cap = |c: i64| (n_train as i64).min(c).max(4);
    let mut init = Config::new();
    let dims = match learner {
        "gbt" => {
            init.insert("tree_num".into(), ParamValue::Int(4));
            init.insert("leaf_num".into(), ParamValue::Int(4));
            init.insert("min_child_weight".into(), ParamValue::Float(20.0));
            init.insert("learning_rate".into(), ParamValue::Float(0.1));
            init.insert("reg_lambda".into(), ParamValue::Float(1.0));
            vec![
                Dim::int("tree_num", 4, cap(TREE_CAP), Scale::Log).cost_related(),
                Dim::int("leaf_num", 4, cap(TREE_CAP), Scale::Log).cost_related(),
                Dim::float("min_child_weight", 0.01, 20.0, Scale::Log),
                Dim::float("learning_rate", 0.01, 1.0, Scale::Log),
                Dim::float("reg_lambda", 1e-10, 1.0, Scale::Log),
            ]
        }
        "rf" => {
            init.insert("tree_num".into(), ParamValue::Int(4));
            init.insert("max_features_fraction".into(), ParamValue::Float(1.0));
            let mut dims = vec![
                Dim::int("tree_num", 4, cap(FOREST_TREE_CAP), Scale::Log).cost_related(),
                Dim::float("max_features_fraction", 0.1, 1.0, Scale::Linear),
            ];
            if task.is_classification() {
                init.insert("split_criterion".into(), ParamValue::Cat("gini".into()));
                dims.push(Dim::categorical("split_criterion", &["gini", "entropy"]));
            }
            dims
        }
        "lr" => {
            init.insert("C".into(), ParamValue::Float(1.0));
            vec![Dim::float("C", 0.03125, 32768.0, Scale::Log)]
        }
        other => return Err(Error::UnknownLearner(other.to_string())),
    };
    SearchSpace::new(dims, init)
}
