mod common;

use std::collections::BTreeMap;

use capplan::experiment::{run, Approach, RunSpec};
use capplan::model::{build_cospis, build_det, ConstraintRef};
use capplan::scenarios::sample_scenarios;
use capplan::simulate::{evaluate, execute, SimError};
use capplan::solver::{fallback_manual, solve_with_observer, Phase};
use capplan::synthgen::{generate, GenConfig};
use capplan::{solve, EstimatorKind, HistoryRecord, JobSpec, Problem, Schedule, SolveConfig, SolveStatus, Strategy};
use common::tiny_problem;

fn job(id: &str, q: i64, f: i64, u: i64, deps: &[&str], history: &[(i64, i64)]) -> JobSpec {
    JobSpec {
        id: id.into(),
        q,
        f,
        u,
        deps: deps.iter().map(|d| d.to_string()).collect(),
        history: history.iter().map(|&(d, c)| HistoryRecord::new(d, c)).collect(),
    }
}

fn exact() -> SolveConfig {
    SolveConfig { strategy: Strategy::Exact, ..SolveConfig::default() }
}

#[test]
fn single_job_at_request() {
    let p = Problem::new(20, vec![job("a", 3, 2, 10, &[], &[(4, 7)])]);
    let s = solve(&build_det(&p, EstimatorKind::P50).unwrap(), &exact()).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    assert_eq!(s.objective, 7);
}

#[test]
fn empty_domain_is_infeasible_with_core() {
    // Latest start 1 but the duration pushes the end past u.
    let p = Problem::new(20, vec![job("a", 0, 1, 3, &[], &[(5, 2)])]);
    let m = build_cospis(&p, &sample_scenarios(&p, 2, 0).unwrap(), 0.0).unwrap();
    let s = solve(&m, &exact()).unwrap();
    assert_eq!(s.status, SolveStatus::Infeasible);
    let core = s.core.expect("core");
    assert!(!core.is_empty());
    assert!(core.iter().all(|c| match c {
        ConstraintRef::Deadline { job, .. } | ConstraintRef::Domain { job } => job == "a",
        ConstraintRef::Precedence { .. } => false,
    }));
}

#[test]
fn tolerance_absorbs_a_bad_scenario() {
    // One of two history records cannot meet the deadline.
    let p = Problem::new(30, vec![job("a", 0, 0, 5, &[], &[(5, 1), (9, 1)])]);
    let mut draws = BTreeMap::new();
    draws.insert("a".to_string(), vec![HistoryRecord::new(5, 1), HistoryRecord::new(9, 1)]);
    let scen = capplan::scenarios::ScenarioSet { k: 2, draws, seed: 0 };
    let strict = solve(&build_cospis(&p, &scen, 0.0).unwrap(), &exact()).unwrap();
    assert_eq!(strict.status, SolveStatus::Infeasible);
    let loose = solve(&build_cospis(&p, &scen, 0.5).unwrap(), &exact()).unwrap();
    assert_eq!(loose.status, SolveStatus::Optimal);
    assert_eq!(loose.violated.len(), 1);
}

#[test]
fn fallback_is_manual_with_p100_peak() {
    let p = Problem::new(
        50,
        vec![
            job("a", 0, 5, 20, &[], &[(4, 2), (6, 3)]),
            job("b", 2, 5, 20, &[], &[(3, 5), (2, 1)]),
            job("c", 10, 5, 30, &[], &[(1, 2)]),
        ],
    );
    let s = fallback_manual(&p);
    assert_eq!(s.starts, BTreeMap::from([("a".into(), 0), ("b".into(), 2), ("c".into(), 10)]));
    // a runs [0,6) at 3, b runs [2,5) at 5.
    assert_eq!(s.objective, 8);
}

#[test]
fn bitwise_deterministic() {
    for seed in [1, 2, 3] {
        let p = generate(&GenConfig::new(25, seed)).unwrap();
        let m = build_cospis(&p, &sample_scenarios(&p, 8, seed).unwrap(), 0.25).unwrap();
        let cfg = SolveConfig {
            strategy: Strategy::LocalSearch,
            search_iterations: 20_000,
            seed,
            ..SolveConfig::default()
        };
        assert_eq!(solve(&m, &cfg).unwrap(), solve(&m, &cfg).unwrap());
    }
}

#[test]
fn observer_objectives_never_increase() {
    for seed in 0..5 {
        let p = generate(&GenConfig::new(15, seed)).unwrap();
        let m = build_cospis(&p, &sample_scenarios(&p, 6, seed).unwrap(), 0.2).unwrap();
        let cfg = SolveConfig { node_limit: 50_000, search_iterations: 50_000, ..exact() };
        let mut seen = Vec::new();
        let s = solve_with_observer(&m, &cfg, &mut |e| seen.push(e)).unwrap();
        assert!(!seen.is_empty());
        assert!(seen.windows(2).all(|w| w[1].objective <= w[0].objective));
        assert!(seen.windows(2).all(|w| w[1].elapsed >= w[0].elapsed));
        assert!(matches!(seen[0].phase, Phase::Greedy | Phase::Anneal));
        assert_eq!(seen.last().unwrap().objective, s.objective);
    }
}

#[test]
fn actual_starts_respect_plan_and_parents() {
    for seed in 0..200 {
        let p = tiny_problem(seed);
        let sched = Schedule::manual(&p, 1);
        let r = execute(&p, &sched, seed).unwrap();
        for j in &p.jobs {
            let start = r.actual_start[&j.id];
            assert!(start >= sched.starts[&j.id]);
            assert_eq!(r.actual_end[&j.id] - start, r.draws[&j.id].duration);
            assert!(j.history.contains(&r.draws[&j.id]));
            for d in &j.deps {
                assert!(start >= r.actual_end[d]);
            }
        }
    }
}

#[test]
fn errors_are_one_sided() {
    for seed in 0..100 {
        let p = tiny_problem(seed);
        let sched = Schedule::manual(&p, 1 + (seed as i64 % 7));
        let e = match evaluate(&p, &sched, 5, seed, &Schedule::manual(&p, 1)) {
            Err(SimError::ZeroBaseline) => continue,
            other => other.unwrap(),
        };
        for r in &e.per_run {
            assert!(r.under_err >= 0.0 && r.over_err >= 0.0);
            assert_eq!(r.under_err * r.over_err, 0.0);
        }
    }
}

#[test]
fn singleton_histories_replay_the_plan() {
    for seed in 0..60 {
        let mut p = tiny_problem(seed);
        for j in &mut p.jobs {
            j.history.truncate(1);
        }
        let Ok(m) = build_det(&p, EstimatorKind::P100) else { continue };
        let s = solve(&m, &exact()).unwrap();
        if !s.status.has_schedule() {
            continue;
        }
        let r = execute(&p, &s.schedule(), seed).unwrap();
        assert_eq!(r.observed_peak, s.scenario_peaks[0], "seed {seed}");
        assert_eq!(r.actual_start, s.starts);
    }
}

#[test]
fn one_run_aggregates_equal_the_run() {
    let p = tiny_problem(12);
    let e = evaluate(&p, &Schedule::manual(&p, 4), 1, 9, &Schedule::manual(&p, 4)).unwrap();
    let r = &e.per_run[0];
    let a = &e.aggregates;
    for (s, v) in [
        (a.observed_peak, r.observed_peak as f64),
        (a.under_err, r.under_err),
        (a.over_err, r.over_err),
        (a.peak_reduction, r.peak_reduction),
    ] {
        assert_eq!((s.min, s.max, s.median, s.mean), (v, v, v, v));
    }
}

#[test]
fn cospis_lowers_mean_observed_peak() {
    let p = generate(&GenConfig::new(30, 5)).unwrap();
    let spec = RunSpec {
        approach: Approach::Cospis,
        runs: 20,
        seed: 5,
        node_limit: 20_000,
        search_iterations: 200_000,
        ..RunSpec::default()
    };
    let report = run(&spec, &p).unwrap();
    assert!(!report.fallback);
    let base: f64 = report.per_run.iter().map(|r| r.baseline_peak as f64).sum::<f64>() / 20.0;
    assert!(report.aggregates.observed_peak.mean < base);
}

#[test]
fn generated_durations_have_expected_mean() {
    let p = generate(&GenConfig::new(200, 3)).unwrap();
    let all: Vec<i64> = p.jobs.iter().flat_map(|j| j.history.iter().map(|h| h.duration)).collect();
    assert_eq!(all.len(), 10_000);
    let mean = all.iter().sum::<i64>() as f64 / all.len() as f64;
    assert!((19.4..=20.6).contains(&mean), "{mean}");
    assert!(capplan::domain::topological_order(&p).is_ok());
    assert!(capplan::domain::validate_problem(&p).is_empty());
}
