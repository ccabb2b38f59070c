//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Tolerances are pinned below.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use frugal::controller::{self, best_at, fit, search, FitOptions, Policy, ResampleChoice, SearchOptions};
use frugal::dataset::{split, Dataset, ResamplingPlan, Task};
use frugal::eci::{self, LearnerState};
use frugal::learners::{self, GradientBoosting, LearnerSpec};
use frugal::localsearch::{LocalSearch, LocalSearchConfig};
use frugal::metrics::Metric;
use frugal::proposers::{next_sample_size, resampling_rule, INITIAL_SAMPLE_SIZE};
use frugal::rng::substream;
use frugal::space::{Config, ParamValue};
use frugal::surrogate::{replay, Landscape, SurrogateEvaluator};
use ndarray::Array2;
use rand::Rng;

const SAMPLER_DRAWS: usize = 100_000;
const SAMPLER_TOL: f64 = 0.01;
const LS_SEEDS: u64 = 100;
const LS_MIN_SUCCESSES: usize = 95;
const LS_MAX_PROPOSALS: usize = 500;
const LS_TARGET: f64 = 1e-3;
const UNIT_NORM_TOL: f64 = 1e-9;
const ABLATION_SEEDS: u64 = 20;
const ABLATION_BUDGET: f64 = 1e4;
const CHECKPOINTS: usize = 50;
const VS_ROUNDROBIN: f64 = 0.70;
const VS_FULLDATA: f64 = 0.90;
const QUARTILE_SEEDS: f64 = 0.80;
const E2E_BUDGET: f64 = 60.0;
const CV_RATIO_BAND: (f64, f64) = (2.0, 2.0);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("eci oracle", eci_oracle),
        ("sampler distribution", sampler_distribution),
        ("self-correction", self_correction),
        ("local-search convergence", local_search),
        ("resampling rule", resampling_grid),
        ("sample-size schedule", sample_schedule),
        ("ablation", ablation),
        ("anytime cost pattern", cost_pattern),
        ("determinism", determinism),
        ("end-to-end", end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("{tag} {:>2} {name}: {} [{:.1}s]", i + 1, o.detail, start.elapsed().as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}

// ---------------------------------------------------------------- 1

struct Fixture {
    k0: f64,
    k1: f64,
    k2: f64,
    delta: f64,
    err: f64,
    last: f64,
    size: usize,
    full: usize,
    best: f64,
    c: f64,
    gap_factor: f64,
}

fn fx(k0: f64, k1: f64, k2: f64, delta: f64, err: f64, last: f64, size: usize, best: f64) -> Fixture {
    Fixture {
        k0,
        k1,
        k2,
        delta,
        err,
        last,
        size,
        full: 1000,
        best,
        c: 2.0,
        gap_factor: 2.0,
    }
}

/// Brute force from the definitions, sharing nothing with the library.
fn oracle(f: &Fixture) -> (f64, f64, f64) {
    let since_last = f.k0 - f.k1;
    let between = f.k1 - f.k2;
    let e1 = if since_last > between { since_last } else { between };
    let e2 = if f.size >= f.full { f64::INFINITY } else { f.c * f.last };
    let cheaper = if e1 < e2 { e1 } else { e2 };
    let (d, t) = if f.delta == 0.0 { (f.err, f.k0) } else { (f.delta, f.k0 - f.k2) };
    let gap = if f.err > f.best { f.gap_factor * (f.err - f.best) * t / d } else { 0.0 };
    (e1, e2, if gap > cheaper { gap } else { cheaper })
}

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

fn eci_oracle() -> Outcome {
    let start = Instant::now();
    let mut cases = vec![
        // single trial: delta is still 0
        fx(1.0, 1.0, 0.0, 0.0, 0.3, 1.0, 100, 0.3),
        fx(1.0, 1.0, 0.0, 0.0, 0.3, 1.0, 100, 0.2),
        fx(4.0, 4.0, 0.0, 0.0, 0.25, 4.0, 1000, 0.1),
        fx(2.5, 1.0, 0.0, 0.0, 0.4, 1.0, 100, 0.4),
        // best learner, gap 0
        fx(10.0, 6.0, 3.0, 0.05, 0.1, 2.0, 100, 0.1),
        fx(10.0, 9.0, 3.0, 0.05, 0.1, 2.0, 100, 0.1),
        fx(10.0, 6.0, 3.0, 0.05, 0.1, 2.0, 1000, 0.1),
        fx(10.0, 6.0, 3.0, 0.05, 0.1, 50.0, 100, 0.1),
        // behind the best learner
        fx(10.0, 6.0, 3.0, 0.05, 0.2, 2.0, 100, 0.1),
        fx(10.0, 6.0, 3.0, 0.01, 0.2, 2.0, 100, 0.19),
        fx(100.0, 40.0, 10.0, 0.2, 0.5, 8.0, 100, 0.05),
        fx(100.0, 40.0, 10.0, 0.2, 0.5, 8.0, 1000, 0.05),
        fx(3.0, 3.0, 1.0, 0.1, 0.3, 1.5, 250, 0.29),
        fx(7.5, 2.5, 2.5, 0.001, 0.11, 0.5, 500, 0.1),
        fx(0.003, 0.002, 0.001, 1e-4, 0.09, 0.001, 10, 0.08),
        fx(1e4, 9e3, 1e3, 0.3, 0.9, 700.0, 999, 0.0),
        // eci2 decides
        fx(50.0, 10.0, 5.0, 0.1, 0.2, 1.0, 100, 0.2),
        fx(50.0, 49.0, 5.0, 0.1, 0.2, 30.0, 100, 0.2),
        // improvement just happened: k0 == k1
        fx(12.0, 12.0, 4.0, 0.02, 0.15, 3.0, 100, 0.15),
        fx(12.0, 12.0, 4.0, 0.02, 0.15, 3.0, 100, 0.05),
        fx(12.0, 12.0, 12.0, 0.02, 0.15, 3.0, 100, 0.15),
        // full size, behind
        fx(20.0, 15.0, 5.0, 0.05, 0.3, 5.0, 1000, 0.25),
    ];
    cases.push(Fixture {
        c: 3.0,
        gap_factor: 1.0,
        ..fx(9.0, 5.0, 2.0, 0.04, 0.2, 1.0, 100, 0.1)
    });
    cases.push(Fixture {
        c: 1.5,
        gap_factor: 4.0,
        ..fx(9.0, 5.0, 2.0, 0.04, 0.2, 10.0, 100, 0.1)
    });

    let mut mismatches = Vec::new();
    for (i, f) in cases.iter().enumerate() {
        let state = LearnerState {
            k0: f.k0,
            k1: f.k1,
            k2: f.k2,
            delta: f.delta,
            best_error: f.err,
            last_cost: f.last,
            tried: true,
            ..LearnerState::new(1.0, f.size, f.full)
        };
        let (e1, e2, e) = oracle(f);
        let got = eci::eci(&state, f.best, f.c, f.gap_factor);
        let ok = match (&got, eci::eci1(&state), eci::eci2(&state, f.c)) {
            (Ok(g), Ok(g1), Ok(g2)) => {
                same(g.eci1, e1) && same(g.eci2, e2) && same(g.eci, e) && same(g1, e1) && same(g2, e2)
            }
            _ => false,
        };
        if !ok {
            mismatches.push(format!("#{i}: got {got:?}, want ({e1}, {e2}, {e})"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        cases.len() >= 20 && mismatches.is_empty() && secs < 1.0,
        format!("{} fixtures, {} mismatches {:?}, {secs:.3}s", cases.len(), mismatches.len(), mismatches),
    )
}

// ---------------------------------------------------------------- 2

fn sampler_distribution() -> Outcome {
    let start = Instant::now();
    let vectors: [&[f64]; 3] = [&[1.0, 3.0], &[2.0, 2.0], &[1.0, 1.0, 8.0]];
    let mut worst: f64 = 0.0;
    let mut exact = true;
    let mut notes = Vec::new();
    for (v, ecis) in vectors.iter().enumerate() {
        let opt: Vec<Option<f64>> = ecis.iter().map(|&e| Some(e)).collect();
        let inv_total: f64 = ecis.iter().map(|e| 1.0 / e).sum();
        let mut counts = vec![0usize; ecis.len()];
        let mut rng = substream(2024, v as u64);
        for _ in 0..SAMPLER_DRAWS {
            counts[eci::sample_learner(&opt, &mut rng).expect("active learners")] += 1;
        }
        for (i, &n) in counts.iter().enumerate() {
            let want = (1.0 / ecis[i]) / inv_total;
            worst = worst.max((n as f64 / SAMPLER_DRAWS as f64 - want).abs());
        }
        let expected = eci::expected_eci(ecis);
        let harmonic = eci::harmonic_mean(ecis);
        exact &= expected == harmonic;
        notes.push(format!("E={expected} H={harmonic}"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= SAMPLER_TOL && exact && secs < 5.0,
        format!("max |freq - p| = {worst:.4}, {}, {secs:.2}s", notes.join(", ")),
    )
}

// ---------------------------------------------------------------- 3

fn self_correction() -> Outcome {
    let others = [Some(6.0), Some(25.0)];
    let best_overall = 0.12;
    let mut s = LearnerState::new(1.0, 10_000, 100_000);
    s.record_trial(1.0, 0.30);
    s.last_cost = 1.0;
    s.record_trial(1.5, 0.20);
    s.last_cost = 1.5;

    let costs = [0.5, 2.0, 1.0, 0.1, 3.0, 1.2, 0.7, 2.5, 0.9, 1.1, 4.0, 0.2, 1.3, 0.8, 1.6];
    let probability = |s: &LearnerState| {
        let e = eci::estimate(s, best_overall, 2.0, 2.0).expect("tried");
        (e.eci1, eci::selection_probabilities(&[Some(e.eci), others[0], others[1]])[0])
    };
    let (mut prev_eci1, mut prev_p) = probability(&s);
    let mut violations = 0;
    let mut trace = vec![format!("{prev_p:.3}")];
    for (i, &c) in costs.iter().enumerate() {
        let improved = s.record_trial(c, 0.20 + 0.01 * (i % 3) as f64);
        assert!(!improved, "scripted trials never improve");
        let (e1, p) = probability(&s);
        if e1 < prev_eci1 || p > prev_p {
            violations += 1;
        }
        trace.push(format!("{p:.3}"));
        prev_eci1 = e1;
        prev_p = p;
    }
    outcome(
        violations == 0,
        format!("{} failed trials, {violations} violations, p: {}", costs.len(), trace.join(" ")),
    )
}

// ---------------------------------------------------------------- 4

fn local_search() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for d in [2usize, 3, 5] {
        let mut successes = 0;
        let mut step_violations = 0;
        let mut norm_violations = 0;
        for seed in 0..LS_SEEDS {
            let mut r = substream(seed, 77);
            let opt: Vec<f64> = (0..d).map(|_| r.random::<f64>()).collect();
            let w: Vec<f64> = (0..d).map(|_| 0.5 + r.random::<f64>()).collect();
            let f = |x: &[f64]| -> f64 {
                x.iter().zip(&opt).zip(&w).map(|((a, b), c)| c * (a - b).powi(2)).sum()
            };
            let start: Vec<f64> = (0..d).map(|_| r.random::<f64>()).collect();
            let mut ls = LocalSearch::new(start, LocalSearchConfig::for_dim(d), substream(seed, 5));
            let mut incumbent = f(ls.center());
            let mut best = incumbent;
            let mut proposals = 0;
            let mut step = ls.step();
            while proposals < LS_MAX_PROPOSALS && best > LS_TARGET {
                if ls.is_converged() {
                    ls.restart().expect("restart");
                    incumbent = f(ls.center());
                    best = best.min(incumbent);
                    step = ls.step();
                    continue;
                }
                let x = ls.propose().expect("propose");
                proposals += 1;
                let (u, _) = ls.pending_direction().expect("direction after propose");
                let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > UNIT_NORM_TOL {
                    norm_violations += 1;
                }
                let e = f(&x);
                let improved = e < incumbent;
                if improved {
                    incumbent = e;
                }
                best = best.min(e);
                ls.report(&x, improved).expect("report");
                if ls.step() > step {
                    step_violations += 1;
                }
                step = ls.step();
            }
            if best <= LS_TARGET {
                successes += 1;
            }
        }
        pass &= successes >= LS_MIN_SUCCESSES && step_violations == 0 && norm_violations == 0;
        parts.push(format!(
            "d={d}: {successes}/{LS_SEEDS} (step {step_violations}, norm {norm_violations})"
        ));
    }
    outcome(pass, parts.join(", "))
}

// ---------------------------------------------------------------- 5

fn resampling_grid() -> Outcome {
    let mut cells = Vec::new();
    let mut pass = true;
    for n in [99_999usize, 100_000] {
        for rate in [9_999_999.0, 10_000_000.0] {
            let cv = resampling_rule(n, rate).is_cv();
            let want = n < 100_000 && rate < 10_000_000.0;
            pass &= cv == want;
            cells.push(format!("({n}, {rate}) -> {}", if cv { "cv" } else { "holdout" }));
        }
    }
    outcome(pass, cells.join(", "))
}

// ---------------------------------------------------------------- 6

fn sample_schedule() -> Outcome {
    const FULL: usize = 130_064;
    let expected = [10_000usize, 20_000, 40_000, 80_000, FULL];

    let mut direct = vec![INITIAL_SAMPLE_SIZE];
    while *direct.last().unwrap() < FULL {
        direct.push(next_sample_size(*direct.last().unwrap(), 2.0, FULL));
    }
    let stays = next_sample_size(FULL, 2.0, FULL) == FULL;

    let mut landscape = Landscape::default();
    landscape.full_size = FULL;
    landscape.arms.truncate(1);
    let arms = landscape.arms_for_search().expect("arms");
    let mut evaluator = SurrogateEvaluator::new(&landscape);
    let run = search(
        &arms,
        FULL,
        &mut evaluator,
        &SearchOptions {
            budget_secs: 1e9,
            seed: 3,
            max_trials: Some(20_000),
            ..SearchOptions::default()
        },
    )
    .expect("search");

    let sizes: Vec<usize> = run.trials.iter().map(|t| t.sample_size).collect();
    let mut epochs: Vec<Vec<usize>> = vec![vec![sizes[0]]];
    let mut bad_transitions = 0;
    for w in sizes.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b < a {
            if a != FULL || b != INITIAL_SAMPLE_SIZE {
                bad_transitions += 1;
            }
            epochs.push(vec![b]);
        } else if b > a {
            if a == FULL || b != next_sample_size(a, 2.0, FULL) {
                bad_transitions += 1;
            }
            epochs.last_mut().unwrap().push(b);
        }
    }
    let full_epochs = epochs.iter().filter(|e| e.as_slice() == expected).count();
    let restarted = epochs.len() >= 2 && epochs[1].first() == Some(&INITIAL_SAMPLE_SIZE);
    outcome(
        direct == expected && stays && bad_transitions == 0 && epochs[0] == expected && restarted,
        format!(
            "schedule {direct:?}, search epochs {epochs:?}, {full_epochs} complete, {bad_transitions} bad transitions"
        ),
    )
}

// ---------------------------------------------------------------- 7, 8

struct AblationRun {
    flaml: controller::SearchOutcome,
    roundrobin: controller::SearchOutcome,
    fulldata: controller::SearchOutcome,
}

fn ablation_runs() -> &'static [AblationRun] {
    static RUNS: std::sync::OnceLock<Vec<AblationRun>> = std::sync::OnceLock::new();
    RUNS.get_or_init(|| {
        let landscape = Landscape::default();
        assert_eq!(landscape.full_size, 1_000_000);
        (0..ABLATION_SEEDS)
            .map(|seed| AblationRun {
                flaml: replay(Policy::Flaml, &landscape, ABLATION_BUDGET, seed).expect("flaml"),
                roundrobin: replay(Policy::RoundRobin, &landscape, ABLATION_BUDGET, seed).expect("roundrobin"),
                fulldata: replay(Policy::FullData, &landscape, ABLATION_BUDGET, seed).expect("fulldata"),
            })
            .collect()
    })
}

fn ablation() -> Outcome {
    let start = Instant::now();
    let runs = ablation_runs();
    let (mut rr_ok, mut rr_n, mut fd_ok, mut fd_n) = (0, 0, 0, 0);
    for run in runs {
        let (f, r, d) = (run.flaml.curve(), run.roundrobin.curve(), run.fulldata.curve());
        for i in 1..=CHECKPOINTS {
            let t = ABLATION_BUDGET * i as f64 / CHECKPOINTS as f64;
            let a = best_at(&f, t);
            rr_n += 1;
            if a <= best_at(&r, t) {
                rr_ok += 1;
            }
            if t <= 0.1 * ABLATION_BUDGET {
                fd_n += 1;
                if a <= best_at(&d, t) {
                    fd_ok += 1;
                }
            }
        }
    }
    let rr = rr_ok as f64 / rr_n as f64;
    let fd = fd_ok as f64 / fd_n as f64;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        rr >= VS_ROUNDROBIN && fd >= VS_FULLDATA && secs < 60.0,
        format!(
            "flaml <= roundrobin at {rr_ok}/{rr_n} ({:.1}%), <= fulldata at {fd_ok}/{fd_n} ({:.1}%) early checkpoints, {secs:.1}s",
            rr * 100.0,
            fd * 100.0
        ),
    )
}

fn cost_pattern() -> Outcome {
    let runs = ablation_runs();
    let mut ok = 0;
    let mut patterns = Vec::new();
    for run in runs {
        let trials = &run.flaml.trials;
        let end = trials.last().expect("trials").time;
        let mut q = [0.0f64; 4];
        for t in trials {
            let k = ((t.time / end * 4.0) as usize).min(3);
            q[k] = q[k].max(t.cost);
        }
        if q.windows(2).all(|w| w[0] <= w[1]) {
            ok += 1;
        } else {
            patterns.push(format!("{q:.2?}"));
        }
    }
    let share = ok as f64 / runs.len() as f64;
    outcome(
        share >= QUARTILE_SEEDS,
        format!("non-decreasing quartile maxima in {ok}/{} seeds; others {patterns:?}", runs.len()),
    )
}

// ---------------------------------------------------------------- 9

/// Binary data: the label is a nonlinear function of the first four
/// features with 5% of labels flipped.
fn synthetic(n: usize, seed: u64) -> Dataset {
    let mut rng = substream(seed, 99);
    let x = Array2::from_shape_fn((n, 10), |_| rng.random_range(-1.0f64..1.0));
    let y = x
        .rows()
        .into_iter()
        .map(|r| {
            let score = r[0] * r[1] + (3.0 * r[2]).sin() + r[3] * r[3] - 0.3;
            let label = score > 0.0;
            f64::from(label ^ (rng.random::<f64>() < 0.05))
        })
        .collect();
    Dataset::new(x, y, Task::Binary).expect("valid dataset")
}

fn per_learner(trials: &[controller::TrialRecord]) -> std::collections::BTreeMap<String, Vec<Config>> {
    let mut m = std::collections::BTreeMap::<String, Vec<Config>>::new();
    for t in trials {
        m.entry(t.learner.clone()).or_default().push(t.config.clone());
    }
    m
}

fn determinism() -> Outcome {
    let landscape = Landscape::default();
    let logs: Vec<String> = (0..2)
        .map(|_| {
            let run = replay(Policy::Flaml, &landscape, ABLATION_BUDGET, 11).expect("replay");
            controller::log_to_string(&run.trials).expect("log")
        })
        .collect();
    let surrogate_same = logs[0] == logs[1];

    let data = synthetic(5_000, 5);
    let single = FitOptions {
        learners: Some(vec!["gbt".into()]),
        seed: 17,
        max_trials: Some(12),
        ..FitOptions::default()
    };
    let a = fit(&data, 600.0, &single).expect("fit");
    let b = fit(&data, 600.0, &single).expect("fit");
    let key = |t: &controller::TrialRecord| (t.config.clone(), t.sample_size, t.resample);
    let single_same = a.trials.len() == b.trials.len()
        && a.trials.iter().map(key).eq(b.trials.iter().map(key))
        && a.best_config == b.best_config;

    let multi = FitOptions {
        seed: 17,
        ..FitOptions::default()
    };
    let a = per_learner(&fit(&data, 4.0, &multi).expect("fit").trials);
    let b = per_learner(&fit(&data, 4.0, &multi).expect("fit").trials);
    let mut compared = 0;
    let mut multi_same = a.keys().eq(b.keys());
    for (name, xs) in &a {
        let ys = b.get(name).map(Vec::as_slice).unwrap_or(&[]);
        let n = xs.len().min(ys.len());
        compared += n;
        multi_same &= xs[..n] == ys[..n];
    }
    outcome(
        surrogate_same && single_same && multi_same,
        format!(
            "surrogate logs identical: {surrogate_same} ({} bytes); single-learner sequence identical: {single_same}; \
             multi-learner per-learner prefixes identical: {multi_same} ({compared} configs compared)",
            logs[0].len()
        ),
    )
}

// ---------------------------------------------------------------- 10

fn end_to_end() -> Outcome {
    let train = synthetic(20_000, 10);
    let test = synthetic(5_000, 11);
    let metric = Metric::default_for(Task::Binary);

    let gbt = LearnerSpec::new(Arc::new(GradientBoosting), train.n_instances(), Task::Binary).expect("spec");
    let init = learners::train(&gbt, gbt.space.init(), &train, 0).expect("init model");
    let init_error = metric.error(&init.predict(test.features()).expect("predict"), test.labels()).expect("metric");

    let opts = FitOptions {
        metric: Some(metric.clone()),
        resample: ResampleChoice::Auto,
        seed: 0,
        ..FitOptions::default()
    };
    let result = fit(&train, E2E_BUDGET, &opts).expect("fit");
    let fit_error = metric
        .error(&result.predict(test.features()).expect("predict"), test.labels())
        .expect("metric");

    // Matched configs under both plans on the same data.
    let (k, rho) = (5usize, 0.1);
    let target = (k as f64 - 1.0) / (1.0 - rho);
    let cv_folds = split(&train, ResamplingPlan::Cv { k }, 1).expect("cv");
    let holdout = split(&train, ResamplingPlan::Holdout { rho }, 1).expect("holdout");
    let mut configs = Vec::new();
    for (trees, leaves) in [(32i64, 16i64), (64, 8), (24, 32)] {
        let mut c = gbt.space.init().clone();
        c.insert("tree_num".into(), ParamValue::Int(trees));
        c.insert("leaf_num".into(), ParamValue::Int(leaves));
        configs.push(c);
    }
    let (mut cv_cost, mut ho_cost) = (0.0, 0.0);
    for c in &configs {
        cv_cost += learners::evaluate(&gbt, c, &cv_folds, &metric, 0).expect("cv eval").1;
        ho_cost += learners::evaluate(&gbt, c, &holdout, &metric, 0).expect("holdout eval").1;
    }
    let ratio = cv_cost / ho_cost;
    let in_band = ratio >= target / CV_RATIO_BAND.0 && ratio <= target * CV_RATIO_BAND.1;

    outcome(
        fit_error < init_error && in_band,
        format!(
            "test 1-AUC {fit_error:.4} ({} {} trials) vs init gbt {init_error:.4}; cv/holdout cost ratio {ratio:.2} \
             (target {target:.2}, band [{:.2}, {:.2}])",
            result.best_config.learner,
            result.trials.len(),
            target / CV_RATIO_BAND.0,
            target * CV_RATIO_BAND.1
        ),
    )
}
