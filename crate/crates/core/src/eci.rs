//! Estimated cost for improvement (ECI) and the learner sampler built on it.
//!
//! Per learner we track the total cost `k0`, the total cost at the two most
//! recent best-error updates (`k1`, `k2`) and the error reduction `delta`
//! between those updates. From these:
//!
//! * `eci1 = max(k0 - k1, k1 - k2)`: cost to improve at the current sample size,
//! * `eci2 = c * last_cost`: cost to retry the incumbent on `c` times the data,
//! * `eci = max(gap_factor * (err_l - err_best) * (k0 - k2) / delta, min(eci1, eci2))`.
//!
//! Learners are sampled with probability proportional to `1 / eci`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ECIs are floored at this many seconds before inversion.
pub const ECI_FLOOR: f64 = 1e-6;
pub const DEFAULT_GAP_FACTOR: f64 = 2.0;
pub const DEFAULT_SAMPLE_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerState {
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub delta: f64,
    pub best_error: f64,
    /// Cost of the latest trial of the incumbent configuration.
    pub last_cost: f64,
    pub sample_size: usize,
    pub full_size: usize,
    pub tried: bool,
    /// Relative cost of the learner's cheapest configuration.
    pub cost_constant: f64,
    /// ECI assigned before the learner's first trial.
    pub bootstrap_eci1: Option<f64>,
}

impl LearnerState {
    pub fn new(cost_constant: f64, sample_size: usize, full_size: usize) -> Self {
        LearnerState {
            k0: 0.0,
            k1: 0.0,
            k2: 0.0,
            delta: 0.0,
            best_error: f64::INFINITY,
            last_cost: 0.0,
            sample_size,
            full_size,
            tried: false,
            cost_constant,
            bootstrap_eci1: None,
        }
    }

    pub fn at_full_size(&self) -> bool {
        self.sample_size >= self.full_size
    }

    /// Adds a trial's cost and, when `error` beats the learner's best,
    /// shifts the improvement bookkeeping. Returns whether it improved.
    pub fn record_trial(&mut self, cost: f64, error: f64) -> bool {
        self.k0 += cost;
        let first = !self.tried;
        self.tried = true;
        if error < self.best_error {
            if !first {
                self.delta = self.best_error - error;
            }
            self.k2 = self.k1;
            self.k1 = self.k0;
            self.best_error = error;
            true
        } else {
            false
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EciEstimate {
    pub eci1: f64,
    pub eci2: f64,
    pub eci: f64,
    /// Efficiency of improvement: error reduction per unit cost.
    pub v: f64,
    pub tau: f64,
}

fn require_tried(state: &LearnerState) -> Result<()> {
    if state.tried {
        Ok(())
    } else {
        Err(Error::Eci("learner has no trials yet; use its bootstrap estimate".into()))
    }
}

pub fn eci1(state: &LearnerState) -> Result<f64> {
    require_tried(state)?;
    Ok((state.k0 - state.k1).max(state.k1 - state.k2))
}

/// Infinite once the learner already trains on the full data.
pub fn eci2(state: &LearnerState, c: f64) -> Result<f64> {
    require_tried(state)?;
    if state.at_full_size() {
        Ok(f64::INFINITY)
    } else {
        Ok(c * state.last_cost)
    }
}

pub fn eci(state: &LearnerState, best_overall: f64, c: f64, gap_factor: f64) -> Result<EciEstimate> {
    let e1 = eci1(state)?;
    let e2 = eci2(state, c)?;
    let (delta, tau) = if state.delta == 0.0 {
        // the learner's first configuration is still its best
        (state.best_error, state.k0)
    } else {
        (state.delta, state.k0 - state.k2)
    };
    let v = delta / tau;
    let gap = state.best_error - best_overall;
    let gap_cost = if gap > 0.0 {
        gap_factor * gap * tau / delta
    } else {
        0.0
    };
    Ok(EciEstimate {
        eci1: e1,
        eci2: e2,
        eci: gap_cost.max(e1.min(e2)),
        v,
        tau,
    })
}

/// ECI of an untried learner, or the full estimate of a tried one.
pub fn estimate(
    state: &LearnerState,
    best_overall: f64,
    c: f64,
    gap_factor: f64,
) -> Result<EciEstimate> {
    if state.tried {
        return eci(state, best_overall, c, gap_factor);
    }
    let b = state
        .bootstrap_eci1
        .ok_or_else(|| Error::Eci("untried learner has not been bootstrapped".into()))?;
    Ok(EciEstimate {
        eci1: b,
        eci2: f64::INFINITY,
        eci: b,
        v: 0.0,
        tau: 0.0,
    })
}

/// Index of the learner with the lowest cost constant (first on ties).
pub fn fastest(states: &[LearnerState]) -> Option<usize> {
    states
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.cost_constant.total_cmp(&b.1.cost_constant))
        .map(|(i, _)| i)
}

/// Gives every untried learner `eci1 = kappa0 * constant / fastest_constant`,
/// where `kappa0` is the fastest learner's first trial cost.
pub fn bootstrap_untried(states: &mut [LearnerState], kappa0: f64) -> Result<()> {
    let f = fastest(states).ok_or_else(|| Error::Eci("no learners".into()))?;
    if !states[f].tried {
        return Err(Error::Eci("the fastest learner has not run its first trial".into()));
    }
    let base = states[f].cost_constant;
    for s in states.iter_mut().filter(|s| !s.tried) {
        s.bootstrap_eci1 = Some(s.cost_constant / base * kappa0);
    }
    Ok(())
}

/// Selection probabilities proportional to `1 / eci`; `None` marks an
/// inactive learner, which gets probability 0.
pub fn selection_probabilities(ecis: &[Option<f64>]) -> Vec<f64> {
    let weights: Vec<f64> = ecis
        .iter()
        .map(|e| e.map_or(0.0, |e| 1.0 / e.max(ECI_FLOOR)))
        .collect();
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return weights;
    }
    weights.into_iter().map(|w| w / total).collect()
}

pub fn sample_learner(ecis: &[Option<f64>], rng: &mut impl Rng) -> Result<usize> {
    let probs = selection_probabilities(ecis);
    let active: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
    match active.as_slice() {
        [] => Err(Error::NoLearner("all learners converged".into())),
        [only] => Ok(*only),
        _ => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for &i in &active {
                acc += probs[i];
                if u < acc {
                    return Ok(i);
                }
            }
            Ok(*active.last().unwrap())
        }
    }
}

/// Expected ECI of one draw from the sampler. The normalization is applied
/// once, after summing `w * eci` with `w = 1 / eci`.
pub fn expected_eci(ecis: &[f64]) -> f64 {
    let weights: Vec<f64> = ecis.iter().map(|e| 1.0 / e.max(ECI_FLOOR)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter().zip(ecis).map(|(w, e)| w * e).sum::<f64>() / total
}

pub fn harmonic_mean(values: &[f64]) -> f64 {
    values.len() as f64 / values.iter().map(|v| 1.0 / v).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn state(k0: f64, k1: f64, k2: f64, delta: f64, best: f64, last: f64) -> LearnerState {
        LearnerState {
            k0,
            k1,
            k2,
            delta,
            best_error: best,
            last_cost: last,
            sample_size: 10_000,
            full_size: 100_000,
            tried: true,
            cost_constant: 1.0,
            bootstrap_eci1: None,
        }
    }

    #[test]
    fn eci1_examples() {
        assert_eq!(eci1(&state(100.0, 60.0, 20.0, 0.1, 0.2, 1.0)).unwrap(), 40.0);
        assert_eq!(eci1(&state(5.0, 5.0, 5.0, 0.1, 0.2, 1.0)).unwrap(), 0.0);
        assert_eq!(eci1(&state(10.0, 6.0, 2.0, 0.1, 0.2, 1.0)).unwrap(), 4.0);
    }

    #[test]
    fn eci2_examples() {
        assert_eq!(eci2(&state(1.0, 1.0, 0.0, 0.0, 0.2, 8.0), 2.0).unwrap(), 16.0);
        assert_eq!(eci2(&state(1.0, 1.0, 0.0, 0.0, 0.2, 0.5), 2.0).unwrap(), 1.0);
        let mut full = state(1.0, 1.0, 0.0, 0.0, 0.2, 8.0);
        full.sample_size = full.full_size;
        assert_eq!(eci2(&full, 2.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn best_learner_takes_min_branch() {
        // k0 - k1 = 40 ; last_cost 8 => eci2 = 16
        let s = state(100.0, 60.0, 20.0, 0.05, 0.2, 8.0);
        let e = eci(&s, 0.2, 2.0, 2.0).unwrap();
        assert_eq!(e.eci, 16.0);
    }

    #[test]
    fn gap_dominates_for_lagging_learner() {
        let s = state(100.0, 60.0, 20.0, 0.05, 0.25, 8.0);
        let e = eci(&s, 0.20, 2.0, 2.0).unwrap();
        assert!((e.eci - 160.0).abs() < 1e-9, "{}", e.eci);
        assert_eq!(e.tau, 80.0);
    }

    #[test]
    fn zero_delta_uses_total_cost() {
        let s = state(12.0, 12.0, 0.0, 0.0, 0.30, 12.0);
        let e = eci(&s, 0.10, 2.0, 2.0).unwrap();
        assert!((e.v - 0.025).abs() < 1e-15);
        assert_eq!(e.tau, 12.0);
    }

    #[test]
    fn untried_learner_errors() {
        let s = LearnerState::new(1.0, 10, 100);
        assert!(eci1(&s).is_err());
        assert!(eci(&s, 0.1, 2.0, 2.0).is_err());
        assert!(estimate(&s, 0.1, 2.0, 2.0).is_err());
    }

    #[test]
    fn improvement_shifts_bookkeeping() {
        let mut s = LearnerState::new(1.0, 10, 100);
        assert!(s.record_trial(2.0, 0.5));
        assert_eq!((s.k0, s.k1, s.k2, s.delta), (2.0, 2.0, 0.0, 0.0));
        assert!(!s.record_trial(3.0, 0.6));
        assert_eq!((s.k0, s.k1, s.k2), (5.0, 2.0, 0.0));
        assert!(s.record_trial(1.0, 0.4));
        assert_eq!((s.k0, s.k1, s.k2), (6.0, 6.0, 2.0));
        assert!((s.delta - 0.1).abs() < 1e-15);
        assert_eq!(s.best_error, 0.4);
    }

    #[test]
    fn bootstrap_uses_constants() {
        let mut states = vec![
            LearnerState::new(1.0, 10, 100),
            LearnerState::new(2.0, 10, 100),
            LearnerState::new(160.0, 10, 100),
        ];
        assert!(bootstrap_untried(&mut states, 1.0).is_err());
        states[0].record_trial(1.0, 0.3);
        bootstrap_untried(&mut states, 1.0).unwrap();
        assert_eq!(states[0].bootstrap_eci1, None);
        assert_eq!(states[1].bootstrap_eci1, Some(2.0));
        assert_eq!(states[2].bootstrap_eci1, Some(160.0));
        assert_eq!(estimate(&states[2], 0.3, 2.0, 2.0).unwrap().eci, 160.0);
    }

    #[test]
    fn probabilities() {
        assert_eq!(selection_probabilities(&[Some(2.0), Some(2.0)]), vec![0.5, 0.5]);
        assert_eq!(selection_probabilities(&[Some(1.0), Some(3.0)]), vec![0.75, 0.25]);
        assert_eq!(selection_probabilities(&[None, Some(3.0)]), vec![0.0, 1.0]);
        assert_eq!(expected_eci(&[1.0, 3.0]), 1.5);
        assert_eq!(harmonic_mean(&[1.0, 3.0]), 1.5);
        // zero eci is floored rather than dividing by zero
        let p = selection_probabilities(&[Some(0.0), Some(1.0)]);
        assert!(p[0] > 0.999 && p[1] > 0.0);
    }

    #[test]
    fn sampler_single_and_none() {
        let mut rng = substream(0, 0);
        assert_eq!(sample_learner(&[None, Some(5.0)], &mut rng).unwrap(), 1);
        assert!(sample_learner(&[None, None], &mut rng).is_err());
    }
}
