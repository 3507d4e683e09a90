mod common;

use capplan::model::{build_cospis, build_det, build_milp, ModelError, ScheduleModel};
use capplan::scenarios::sample_scenarios;
use capplan::solver::{brute_force, solve, SolveConfig, SolveStatus, Strategy};
use capplan::EstimatorKind;
use common::tiny_problem;

fn exact() -> SolveConfig {
    SolveConfig { strategy: Strategy::Exact, ..SolveConfig::default() }
}

fn agree(m: &ScheduleModel, label: &str) {
    let truth = brute_force(m).unwrap();
    let got = solve(m, &exact()).unwrap();
    match truth.status {
        SolveStatus::Optimal => {
            assert_eq!(got.status, SolveStatus::Optimal, "{label}");
            assert_eq!(got.objective, truth.objective, "{label}");
        }
        _ => assert_eq!(got.status, SolveStatus::Infeasible, "{label}"),
    }
}

#[test]
fn exact_matches_enumeration() {
    let mut checked = 0;
    for seed in 0..150u64 {
        let p = tiny_problem(seed);
        for kind in [EstimatorKind::P50, EstimatorKind::P100] {
            match (build_det(&p, kind), build_milp(&p, kind)) {
                (Ok(det), Ok(milp)) => {
                    agree(&det, &format!("det seed {seed}"));
                    agree(&milp, &format!("milp seed {seed}"));
                    checked += 1;
                }
                (Err(ModelError::StructurallyInfeasible { .. }), Err(ModelError::StructurallyInfeasible { .. })) => {}
                (a, b) => panic!("builders disagree on seed {seed}: {a:?} / {b:?}"),
            }
        }
        for (k, alpha) in [(1, 0.0), (3, 0.0), (4, 0.5), (2, 0.5)] {
            let scen = sample_scenarios(&p, k, seed).unwrap();
            let m = build_cospis(&p, &scen, alpha).unwrap();
            agree(&m, &format!("cospis seed {seed} k {k} alpha {alpha}"));
        }
    }
    assert!(checked >= 100);
}

#[test]
fn local_search_never_beats_exact() {
    for seed in 0..60u64 {
        let p = tiny_problem(seed);
        let scen = sample_scenarios(&p, 4, seed).unwrap();
        let m = build_cospis(&p, &scen, 0.5).unwrap();
        let best = solve(&m, &exact()).unwrap();
        let ls = solve(&m, &SolveConfig { strategy: Strategy::LocalSearch, search_iterations: 5_000, ..exact() }).unwrap();
        if best.status == SolveStatus::Optimal && ls.status.has_schedule() {
            assert!(ls.objective >= best.objective, "seed {seed}");
        }
    }
}
