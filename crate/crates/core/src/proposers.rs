//! Resampling choice and the grow-sample vs new-config decision.

use serde::{Deserialize, Serialize};

use crate::dataset::ResamplingPlan;
use crate::eci::{eci1, eci2, LearnerState};
use crate::error::Result;

/// Cross-validation requires fewer instances than this...
pub const CV_MAX_INSTANCES: usize = 100_000;
/// ...and an instances x features per budget-hour rate below this.
pub const CV_MAX_RATE_PER_HOUR: f64 = 10_000_000.0;
pub const INITIAL_SAMPLE_SIZE: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetContext {
    pub budget_secs: f64,
    pub n_instances: usize,
    pub n_features: usize,
}

impl BudgetContext {
    /// `n_instances * n_features / budget`, in units per hour.
    pub fn rate_per_hour(&self) -> f64 {
        self.n_instances as f64 * self.n_features as f64 * 3600.0 / self.budget_secs
    }
}

/// Strict thresholds: cv iff `n < 100K` and `rate < 10M/hour`.
pub fn resampling_rule(n_instances: usize, rate_per_hour: f64) -> ResamplingPlan {
    if n_instances < CV_MAX_INSTANCES && rate_per_hour < CV_MAX_RATE_PER_HOUR {
        ResamplingPlan::cv()
    } else {
        ResamplingPlan::holdout()
    }
}

pub fn choose_resampling(ctx: &BudgetContext) -> ResamplingPlan {
    resampling_rule(ctx.n_instances, ctx.rate_per_hour())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Step {
    IncreaseSample,
    NewConfig,
}

/// Grow the sample when improving at the current size looks at least as
/// expensive as retrying the incumbent on more data.
pub fn choose_step(state: &LearnerState, c: f64) -> Result<Step> {
    if state.at_full_size() {
        return Ok(Step::NewConfig);
    }
    Ok(if eci1(state)? >= eci2(state, c)? {
        Step::IncreaseSample
    } else {
        Step::NewConfig
    })
}

pub fn initial_sample_size(min_sample: usize, full: usize) -> usize {
    min_sample.clamp(1, full.max(1))
}

pub fn next_sample_size(current: usize, c: f64, full: usize) -> usize {
    let grown = (current as f64 * c).round() as usize;
    grown.max(current + 1).min(full)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(n: usize, f: usize, budget: f64) -> BudgetContext {
        BudgetContext {
            budget_secs: budget,
            n_instances: n,
            n_features: f,
        }
    }

    #[test]
    fn small_data_uses_cv() {
        let c = ctx(748, 4, 3600.0);
        assert_eq!(c.rate_per_hour(), 2992.0);
        assert_eq!(choose_resampling(&c), ResamplingPlan::cv());
    }

    #[test]
    fn many_instances_use_holdout() {
        for (f, b) in [(1, 1e9), (7, 3600.0), (1000, 1.0)] {
            assert_eq!(choose_resampling(&ctx(539_383, f, b)), ResamplingPlan::holdout());
        }
    }

    #[test]
    fn high_rate_uses_holdout() {
        let c = ctx(50_000, 230, 60.0);
        assert_eq!(c.rate_per_hour(), 690_000_000.0);
        assert_eq!(choose_resampling(&c), ResamplingPlan::holdout());
    }

    #[test]
    fn boundaries_are_strict() {
        assert_eq!(resampling_rule(99_999, 9_999_999.0), ResamplingPlan::cv());
        assert_eq!(resampling_rule(100_000, 9_999_999.0), ResamplingPlan::holdout());
        assert_eq!(resampling_rule(99_999, 10_000_000.0), ResamplingPlan::holdout());
        assert_eq!(resampling_rule(100_000, 10_000_000.0), ResamplingPlan::holdout());
    }

    fn learner(k0: f64, k1: f64, k2: f64, last: f64, s: usize) -> LearnerState {
        let mut st = LearnerState::new(1.0, s, 130_064);
        st.k0 = k0;
        st.k1 = k1;
        st.k2 = k2;
        st.last_cost = last;
        st.tried = true;
        st
    }

    #[test]
    fn step_choice() {
        // eci1 = 40, eci2 = 16
        assert_eq!(choose_step(&learner(100.0, 60.0, 20.0, 8.0, 10_000), 2.0).unwrap(), Step::IncreaseSample);
        // eci1 = 5, eci2 = 6
        assert_eq!(choose_step(&learner(10.0, 5.0, 2.0, 3.0, 10_000), 2.0).unwrap(), Step::NewConfig);
        assert_eq!(choose_step(&learner(100.0, 60.0, 20.0, 8.0, 130_064), 2.0).unwrap(), Step::NewConfig);
    }

    #[test]
    fn sample_growth() {
        assert_eq!(next_sample_size(10_000, 2.0, 130_064), 20_000);
        assert_eq!(next_sample_size(80_000, 2.0, 130_064), 130_064);
        assert_eq!(initial_sample_size(INITIAL_SAMPLE_SIZE, 5_000), 5_000);
        assert_eq!(initial_sample_size(INITIAL_SAMPLE_SIZE, 130_064), 10_000);
    }
}
