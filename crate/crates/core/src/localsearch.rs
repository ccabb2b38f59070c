//! Randomized direct search over the unit cube.
//!
//! Each iteration moves the incumbent along a random unit direction; when
//! that fails the opposite direction is tried. After more than `2^(d-1)`
//! consecutive failed direction pairs the stepsize is divided by the ratio
//! of iterations since restart to the iteration that found the incumbent.
//! The search converges once the stepsize drops below its lower bound and
//! must then be restarted from a random point.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSearchConfig {
    pub initial_step: f64,
    pub lower_bound: f64,
    /// Floor on the reduction ratio so every decay makes progress.
    pub min_reduction: f64,
}

impl LocalSearchConfig {
    /// Initial stepsize `sqrt(d)`, lower bound `sqrt(d) / 2^10`.
    pub fn for_dim(d: usize) -> Self {
        Self::scaled(d, 1.0)
    }

    /// Both the initial stepsize and the lower bound multiplied by `scale`.
    pub fn scaled(d: usize, scale: f64) -> Self {
        let root = (d as f64).sqrt() * scale;
        LocalSearchConfig {
            initial_step: root,
            lower_bound: root / 1024.0,
            min_reduction: 1.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Pending {
    direction: Vec<f64>,
    tried_opposite: bool,
}

#[derive(Debug, Clone)]
pub struct LocalSearch {
    config: LocalSearchConfig,
    center: Vec<f64>,
    step: f64,
    pending: Option<Pending>,
    outstanding: Option<Vec<f64>>,
    no_improve: u64,
    iters_since_restart: u64,
    iter_of_best: u64,
    converged: bool,
    adjust_enabled: bool,
    rng: ChaCha8Rng,
}

impl LocalSearch {
    pub fn new(center: Vec<f64>, config: LocalSearchConfig, rng: ChaCha8Rng) -> Self {
        assert!(!center.is_empty(), "local search needs at least one dimension");
        LocalSearch {
            step: config.initial_step,
            config,
            center: project(center),
            pending: None,
            outstanding: None,
            no_improve: 0,
            iters_since_restart: 0,
            iter_of_best: 0,
            converged: false,
            adjust_enabled: true,
            rng,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn config(&self) -> &LocalSearchConfig {
        &self.config
    }

    pub fn is_converged(&self) -> bool {
        self.converged
    }

    pub fn no_improve_count(&self) -> u64 {
        self.no_improve
    }

    pub fn iters_since_restart(&self) -> u64 {
        self.iters_since_restart
    }

    pub fn iter_of_best(&self) -> u64 {
        self.iter_of_best
    }

    pub fn adjustment_enabled(&self) -> bool {
        self.adjust_enabled
    }

    /// Direction of the current move, if one is in progress.
    pub fn pending_direction(&self) -> Option<(&[f64], bool)> {
        self.pending
            .as_ref()
            .map(|p| (p.direction.as_slice(), p.tried_opposite))
    }

    /// Stepsize decay and convergence only happen while enabled.
    pub fn set_adjustment_enabled(&mut self, enabled: bool) {
        self.adjust_enabled = enabled;
    }

    /// Next candidate: the opposite of a failed direction if that has not
    /// been tried yet, otherwise a fresh random direction.
    pub fn propose(&mut self) -> Result<Vec<f64>> {
        if self.converged {
            return Err(Error::LocalSearch("propose called while converged".into()));
        }
        if self.outstanding.is_some() {
            return Err(Error::LocalSearch("previous proposal has not been reported".into()));
        }
        let candidate = match &mut self.pending {
            Some(p) if !p.tried_opposite => {
                p.tried_opposite = true;
                moved(&self.center, &p.direction, -self.step)
            }
            _ => {
                let direction = unit_direction(&mut self.rng, self.center.len());
                let c = moved(&self.center, &direction, self.step);
                self.pending = Some(Pending {
                    direction,
                    tried_opposite: false,
                });
                c
            }
        };
        self.outstanding = Some(candidate.clone());
        Ok(candidate)
    }

    /// Feeds back whether `candidate` strictly beat the incumbent.
    pub fn report(&mut self, candidate: &[f64], improved: bool) -> Result<()> {
        match &self.outstanding {
            Some(c) if c.as_slice() == candidate => {}
            _ => return Err(Error::LocalSearch("report does not match the last proposal".into())),
        }
        self.outstanding = None;
        self.iters_since_restart += 1;
        if improved {
            self.center = candidate.to_vec();
            self.pending = None;
            self.no_improve = 0;
            self.iter_of_best = self.iters_since_restart;
            return Ok(());
        }
        let pair_done = self.pending.as_ref().is_some_and(|p| p.tried_opposite);
        if !pair_done {
            return Ok(());
        }
        self.pending = None;
        self.no_improve += 1;
        if self.adjust_enabled && self.no_improve > no_improve_limit(self.dim()) {
            self.step /= self.reduction_ratio();
            if self.step < self.config.lower_bound {
                self.converged = true;
            }
        }
        Ok(())
    }

    /// Iterations since restart over the iteration that found the incumbent,
    /// floored at `min_reduction`.
    pub fn reduction_ratio(&self) -> f64 {
        let ratio = self.iters_since_restart as f64 / self.iter_of_best.max(1) as f64;
        ratio.max(self.config.min_reduction)
    }

    /// Starts over from a uniformly random point with the initial stepsize.
    pub fn restart(&mut self) -> Result<()> {
        if !self.converged {
            return Err(Error::LocalSearch("restart requested before convergence".into()));
        }
        let d = self.center.len();
        self.center = (0..d).map(|_| self.rng.random::<f64>()).collect();
        self.step = self.config.initial_step;
        self.pending = None;
        self.outstanding = None;
        self.no_improve = 0;
        self.iters_since_restart = 0;
        self.iter_of_best = 0;
        self.converged = false;
        Ok(())
    }
}

/// Consecutive failed pairs tolerated before the stepsize decays.
pub fn no_improve_limit(d: usize) -> u64 {
    1u64.checked_shl(d.saturating_sub(1) as u32).unwrap_or(u64::MAX)
}

/// Uniform direction on the unit sphere in `d` dimensions.
pub fn unit_direction(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    if d == 1 {
        return vec![if rng.random::<bool>() { 1.0 } else { -1.0 }];
    }
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn moved(center: &[f64], direction: &[f64], step: f64) -> Vec<f64> {
    project(
        center
            .iter()
            .zip(direction)
            .map(|(c, u)| c + step * u)
            .collect(),
    )
}

fn project(mut p: Vec<f64>) -> Vec<f64> {
    for x in &mut p {
        *x = x.clamp(0.0, 1.0);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn search(d: usize) -> LocalSearch {
        LocalSearch::new(vec![0.5; d], LocalSearchConfig::for_dim(d), substream(1, 9))
    }

    fn fail_pair(s: &mut LocalSearch) {
        for _ in 0..2 {
            let c = s.propose().unwrap();
            s.report(&c, false).unwrap();
        }
    }

    #[test]
    fn one_dim_direction_is_sign() {
        let mut rng = substream(3, 3);
        for _ in 0..100 {
            let u = unit_direction(&mut rng, 1);
            assert!(u == vec![1.0] || u == vec![-1.0]);
        }
    }

    #[test]
    fn fresh_nine_dim_step_is_three() {
        let mut s = LocalSearch::new(vec![0.5; 9], LocalSearchConfig::for_dim(9), substream(5, 1));
        assert_eq!(s.step(), 3.0);
        let center = s.center().to_vec();
        let c = s.propose().unwrap();
        let (u, _) = s.pending_direction().unwrap();
        let expected: Vec<f64> = center.iter().zip(u).map(|(x, d)| (x + 3.0 * d).clamp(0.0, 1.0)).collect();
        assert_eq!(c, expected);
        let dist = c.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(dist <= 3.0 + 1e-12);
    }

    #[test]
    fn opposite_direction_follows_failure() {
        let mut s = search(3);
        let first = s.propose().unwrap();
        let u = s.pending_direction().unwrap().0.to_vec();
        s.report(&first, false).unwrap();
        let second = s.propose().unwrap();
        let expected: Vec<f64> = s
            .center()
            .iter()
            .zip(&u)
            .map(|(c, d)| (c - s.step() * d).clamp(0.0, 1.0))
            .collect();
        assert_eq!(second, expected);
        assert_eq!(s.pending_direction().unwrap().1, true);
    }

    #[test]
    fn improvement_moves_center_and_resets_counter() {
        let mut s = search(2);
        fail_pair(&mut s);
        assert_eq!(s.no_improve_count(), 1);
        let c = s.propose().unwrap();
        s.report(&c, true).unwrap();
        assert_eq!(s.no_improve_count(), 0);
        assert_eq!(s.center(), c.as_slice());
        assert_eq!(s.iter_of_best(), 3);
        assert!(s.pending_direction().is_none());
    }

    #[test]
    fn one_dim_decay_after_second_failed_pair() {
        let mut s = LocalSearch::new(vec![0.5], LocalSearchConfig::for_dim(1), substream(2, 2));
        fail_pair(&mut s);
        assert_eq!(s.no_improve_count(), 1);
        assert_eq!(s.step(), 1.0);
        fail_pair(&mut s);
        // 4 iterations, none improving: ratio 4 / max(1, 0)
        assert_eq!(s.step(), 0.25);
        assert_eq!(s.no_improve_count(), 2);
        fail_pair(&mut s);
        assert_eq!(s.step(), 0.25 / 6.0);
    }

    #[test]
    fn reduction_ratio_from_iteration_counts() {
        let mut s = LocalSearch::new(vec![0.5; 9], LocalSearchConfig::for_dim(9), substream(2, 2));
        s.iters_since_restart = 10;
        s.iter_of_best = 4;
        assert_eq!(s.reduction_ratio(), 2.5);
        assert!((s.step() / s.reduction_ratio() - 1.2).abs() < 1e-12);
        s.iter_of_best = 10;
        assert_eq!(s.reduction_ratio(), 1.1);
    }

    #[test]
    fn disabled_adjustment_freezes_step() {
        let mut s = search(2);
        s.set_adjustment_enabled(false);
        for _ in 0..50 {
            fail_pair(&mut s);
        }
        assert_eq!(s.step(), 2f64.sqrt());
        assert!(!s.is_converged());
        let center = s.center().to_vec();
        s.set_adjustment_enabled(true);
        assert_eq!(s.center(), center.as_slice());
    }

    #[test]
    fn toggling_keeps_pending() {
        let mut s = search(2);
        let c = s.propose().unwrap();
        s.report(&c, false).unwrap();
        let before = s.pending_direction().map(|(u, t)| (u.to_vec(), t));
        s.set_adjustment_enabled(false);
        s.set_adjustment_enabled(true);
        assert_eq!(s.pending_direction().map(|(u, t)| (u.to_vec(), t)), before);
    }

    #[test]
    fn converges_then_restarts() {
        let mut s = search(4);
        assert!(s.restart().is_err());
        let mut guard = 0;
        while !s.is_converged() {
            fail_pair(&mut s);
            guard += 1;
            assert!(guard < 10_000);
        }
        assert!(s.propose().is_err());
        let before = s.center().to_vec();
        s.restart().unwrap();
        assert_eq!(s.step(), 2.0);
        assert!(!s.is_converged());
        assert_ne!(s.center(), before.as_slice());
        assert!(s.propose().is_ok());
    }

    #[test]
    fn restarts_draw_different_centers() {
        let mut s = search(3);
        s.converged = true;
        s.restart().unwrap();
        let a = s.center().to_vec();
        s.converged = true;
        s.restart().unwrap();
        assert_ne!(a, s.center());
    }

    #[test]
    fn report_must_match_proposal() {
        let mut s = search(2);
        assert!(s.report(&[0.1, 0.1], true).is_err());
        let c = s.propose().unwrap();
        assert!(s.propose().is_err());
        assert!(s.report(&[c[0] + 1e-3, c[1]], false).is_err());
        s.report(&c, false).unwrap();
    }

    #[test]
    fn directions_have_unit_norm() {
        let mut rng = substream(11, 0);
        for d in 1..12 {
            for _ in 0..200 {
                let u = unit_direction(&mut rng, d);
                let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-9);
            }
        }
    }
}
