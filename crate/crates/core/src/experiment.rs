//! End-to-end runs: build a model, solve it, fall back to the manual
//! schedule when needed, and evaluate against the manual baseline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{validate_problem, Problem, Schedule, Violation};
use crate::estimators::EstimatorKind;
use crate::model::{self, ConstraintRef, ModelError, ScheduleModel};
use crate::scenarios::{sample_duration_only, sample_scenarios, SampleError};
use crate::simulate::{evaluate, Aggregates, RunMetrics, SimError};
use crate::solver::{fallback_manual, solve_with_observer, Solution, SolveConfig, SolveError, SolveStatus, Strategy};
use crate::{Cores, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Approach {
    None,
    Det,
    Cospis,
    SoruPk,
    Milp,
}

impl FromStr for Approach {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Approach::None),
            "det" => Ok(Approach::Det),
            "cospis" => Ok(Approach::Cospis),
            "soru-pk" => Ok(Approach::SoruPk),
            "milp" => Ok(Approach::Milp),
            other => Err(format!("unknown approach {other:?} (expected none|det|cospis|soru-pk|milp)")),
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Approach::None => "none",
            Approach::Det => "det",
            Approach::Cospis => "cospis",
            Approach::SoruPk => "soru-pk",
            Approach::Milp => "milp",
        })
    }
}

/// Everything besides the problem that determines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub approach: Approach,
    /// Point estimate for det and milp; cpu estimate for soru-pk.
    pub estimator: EstimatorKind,
    pub samples: usize,
    pub tolerance: f64,
    pub time_limit_s: u64,
    pub seed: u64,
    pub runs: usize,
    pub strategy: Strategy,
    pub node_limit: u64,
    pub search_iterations: u64,
    pub restarts: u32,
}

impl Default for RunSpec {
    fn default() -> Self {
        let solver = SolveConfig::default();
        Self {
            approach: Approach::Cospis,
            estimator: EstimatorKind::P50,
            samples: 25,
            tolerance: 0.4,
            time_limit_s: 900,
            seed: 0,
            runs: 50,
            strategy: Strategy::Auto,
            node_limit: solver.node_limit,
            search_iterations: solver.search_iterations,
            restarts: solver.restarts,
        }
    }
}

impl RunSpec {
    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |msg: &str| Err(RunError::InvalidSpec(msg.to_owned()));
        if matches!(self.approach, Approach::Cospis | Approach::SoruPk) {
            if self.samples == 0 {
                return bad("samples must be at least 1");
            }
            if !(0.0..=1.0).contains(&self.tolerance) {
                return bad("tolerance must lie in [0, 1]");
            }
        }
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        if self.time_limit_s == 0 {
            return bad("time limit must be positive");
        }
        Ok(())
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            time_limit: Duration::from_secs(self.time_limit_s),
            seed: self.seed,
            strategy: self.strategy,
            node_limit: self.node_limit,
            search_iterations: self.search_iterations,
            restarts: self.restarts,
            ..SolveConfig::default()
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid run spec: {0}")]
    InvalidSpec(String),
    #[error("invalid problem: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidProblem(Vec<Violation>),
    #[error("estimated peak is 0, so estimation errors are undefined")]
    ZeroEstimate,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

impl RunError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::InvalidSpec(_) | RunError::InvalidProblem(_) | RunError::ZeroEstimate => 2,
            _ => 4,
        }
    }
}

/// Wall-clock measurements; the only part of a report that varies between
/// identical invocations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub solve_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub spec: RunSpec,
    pub problem: Problem,
    /// The model that was solved, e.g. `cospis` or `det:p50`.
    pub model: Option<String>,
    pub schedule: BTreeMap<String, Time>,
    pub p_est: Cores,
    pub status: SolveStatus,
    /// True when the manual schedule replaced a failed solve.
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core: Option<Vec<ConstraintRef>>,
    pub violated_scenarios: BTreeSet<usize>,
    pub solver_work: u64,
    pub per_run: Vec<RunMetrics>,
    pub aggregates: Aggregates,
    pub timing: Timing,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        if self.fallback {
            3
        } else {
            0
        }
    }

    /// The report with wall-clock fields zeroed.
    pub fn without_timing(&self) -> Report {
        Report { timing: Timing { solve_s: 0.0, total_s: 0.0 }, ..self.clone() }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One line per Monte-Carlo run.
    pub fn per_run_csv(&self) -> String {
        let mut out = String::from(
            "run,observed_peak,baseline_peak,under_err,over_err,max_deadline_violation_s,mean_deadline_violation_s,peak_reduction\n",
        );
        for (i, r) in self.per_run.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{},{},{},{},{},{},{}",
                r.observed_peak,
                r.baseline_peak,
                r.under_err,
                r.over_err,
                r.max_deadline_violation_s,
                r.mean_deadline_violation_s,
                r.peak_reduction
            );
        }
        out
    }
}

fn build(spec: &RunSpec, p: &Problem) -> Result<ScheduleModel, RunError> {
    Ok(match spec.approach {
        Approach::None => unreachable!("no model for the manual approach"),
        Approach::Det => model::build_det(p, spec.estimator)?,
        Approach::Milp => model::build_milp(p, spec.estimator)?,
        Approach::Cospis => {
            let scen = sample_scenarios(p, spec.samples, spec.seed)?;
            model::build_cospis(p, &scen, spec.tolerance)?
        }
        Approach::SoruPk => {
            let scen = sample_duration_only(p, spec.samples, spec.seed, spec.estimator)?;
            model::build_soru_pk(p, &scen, spec.tolerance)?
        }
    })
}

pub fn run(spec: &RunSpec, p: &Problem) -> Result<Report, RunError> {
    let started = Instant::now();
    spec.validate()?;
    let violations = validate_problem(p);
    if !violations.is_empty() {
        return Err(RunError::InvalidProblem(violations));
    }

    let mut reason = None;
    let mut model_name = None;
    let solved: Solution = if spec.approach == Approach::None {
        fallback_manual(p)
    } else {
        match build(spec, p) {
            Ok(m) => {
                model_name = Some(m.kind.to_string());
                let sol = solve_with_observer(&m, &spec.solve_config(), &mut |e| {
                    log::debug!("{:?} incumbent {} after {:.3}s", e.phase, e.objective, e.elapsed.as_secs_f64())
                })?;
                log::info!("{} solved: {} objective {} work {}", m.kind, sol.status, sol.objective, sol.work);
                sol
            }
            Err(RunError::Model(ModelError::StructurallyInfeasible { job, reason: why })) => {
                reason = Some(format!("{job}: {why}"));
                Solution {
                    starts: BTreeMap::new(),
                    scenario_peaks: Vec::new(),
                    violated: BTreeSet::new(),
                    objective: 0,
                    status: SolveStatus::Infeasible,
                    core: Some(vec![ConstraintRef::Domain { job }]),
                    work: 0,
                }
            }
            Err(e) => return Err(e),
        }
    };
    let solve_s = started.elapsed().as_secs_f64();

    let fallback = spec.approach != Approach::None && !solved.status.has_schedule();
    let chosen = if fallback {
        log::warn!("no schedule ({}); falling back to requested starts", solved.status);
        fallback_manual(p)
    } else {
        solved.clone()
    };
    if chosen.objective < 1 {
        return Err(RunError::ZeroEstimate);
    }
    let schedule = chosen.schedule();
    let baseline = Schedule::manual(p, chosen.objective);
    let eval = evaluate(p, &schedule, spec.runs, spec.seed, &baseline)?;

    Ok(Report {
        spec: spec.clone(),
        problem: p.canonicalized(),
        model: model_name,
        schedule: schedule.starts,
        p_est: chosen.objective,
        status: solved.status,
        fallback,
        reason,
        core: solved.core.clone(),
        violated_scenarios: if fallback { BTreeSet::new() } else { solved.violated.clone() },
        solver_work: solved.work,
        per_run: eval.per_run,
        aggregates: eval.aggregates,
        timing: Timing { solve_s, total_s: started.elapsed().as_secs_f64() },
    })
}

/// The grid of the hyperparameter study: K = 5..45 step 5, alpha = 0.1..0.9 step 0.1.
pub fn default_grids() -> (Vec<usize>, Vec<f64>) {
    ((1..=9).map(|i| i * 5).collect(), (1..=9).map(|i| i as f64 / 10.0).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub status: SolveStatus,
    pub fallback: bool,
    pub p_est: Cores,
    pub aggregates: Aggregates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub samples: usize,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<CellResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// How well mean peak reduction follows "non-decreasing in tolerance".
/// Informational only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    /// Two standard errors of the noisiest cell's mean peak reduction.
    pub noise_band: f64,
    pub comparisons: usize,
    /// Adjacent tolerance pairs where the mean dropped by more than the band.
    pub drops_beyond_noise: usize,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub base: RunSpec,
    pub samples_grid: Vec<usize>,
    pub tolerance_grid: Vec<f64>,
    /// Row-major: samples outer, tolerance inner.
    pub cells: Vec<SweepCell>,
    pub trend: TrendCheck,
}

impl SweepReport {
    pub fn cell(&self, samples: usize, tolerance: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.samples == samples && c.tolerance == tolerance)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("sweep serializes");
        s.push('\n');
        s
    }

    /// The heat-map data: one row per cell with the mean of each metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "samples,tolerance,status,fallback,p_est,peak_reduction,under_err,over_err,max_deadline_violation_s,mean_deadline_violation_s,error\n",
        );
        for c in &self.cells {
            match &c.result {
                Some(r) => {
                    let a = &r.aggregates;
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{},{},",
                        c.samples,
                        c.tolerance,
                        r.status,
                        r.fallback,
                        r.p_est,
                        a.peak_reduction.mean,
                        a.under_err.mean,
                        a.over_err.mean,
                        a.max_deadline_violation_s.mean,
                        a.mean_deadline_violation_s.mean
                    );
                }
                None => {
                    let err = c.error.as_deref().unwrap_or("").replace([',', '\n'], " ");
                    let _ = writeln!(out, "{},{},,,,,,,,,{err}", c.samples, c.tolerance);
                }
            }
        }
        out
    }
}

/// Runs COSPiS for every (K, alpha) pair. A failing cell records its error
/// and the sweep carries on.
pub fn sweep(
    p: &Problem,
    samples_grid: &[usize],
    tolerance_grid: &[f64],
    base: &RunSpec,
) -> Result<SweepReport, RunError> {
    if samples_grid.is_empty() || tolerance_grid.is_empty() {
        return Err(RunError::InvalidSpec("sweep grids must be nonempty".into()));
    }
    let pairs: Vec<(usize, f64)> =
        samples_grid.iter().flat_map(|&k| tolerance_grid.iter().map(move |&a| (k, a))).collect();
    let runs: Vec<(SweepCell, f64)> = pairs
        .par_iter()
        .map(|&(samples, tolerance)| {
            let spec = RunSpec { approach: crate::experiment::Approach::Cospis, samples, tolerance, ..base.clone() };
            match run(&spec, p) {
                Ok(r) => {
                    let se = standard_error(&r.per_run.iter().map(|x| x.peak_reduction).collect::<Vec<_>>());
                    let result = CellResult {
                        status: r.status,
                        fallback: r.fallback,
                        p_est: r.p_est,
                        aggregates: r.aggregates,
                    };
                    (SweepCell { samples, tolerance, result: Some(result), error: None }, se)
                }
                Err(e) => (SweepCell { samples, tolerance, result: None, error: Some(e.to_string()) }, 0.0),
            }
        })
        .collect();
    let noise_band = 2.0 * runs.iter().map(|r| r.1).fold(0.0, f64::max);
    let cells: Vec<SweepCell> = runs.into_iter().map(|r| r.0).collect();

    let mut comparisons = 0;
    let mut drops = 0;
    for row in cells.chunks(tolerance_grid.len()) {
        for w in row.windows(2) {
            if let (Some(a), Some(b)) = (&w[0].result, &w[1].result) {
                comparisons += 1;
                if b.aggregates.peak_reduction.mean < a.aggregates.peak_reduction.mean - noise_band {
                    drops += 1;
                }
            }
        }
    }
    Ok(SweepReport {
        base: base.clone(),
        samples_grid: samples_grid.to_vec(),
        tolerance_grid: tolerance_grid.to_vec(),
        cells,
        trend: TrendCheck { noise_band, comparisons, drops_beyond_noise: drops, holds: drops == 0 },
    })
}

fn standard_error(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate, GenConfig};

    fn quick(approach: Approach) -> RunSpec {
        RunSpec {
            approach,
            samples: 5,
            runs: 8,
            seed: 11,
            node_limit: 20_000,
            search_iterations: 20_000,
            ..RunSpec::default()
        }
    }

    #[test]
    fn manual_approach_has_zero_reduction() {
        let p = generate(&GenConfig::new(8, 2)).unwrap();
        let r = run(&quick(Approach::None), &p).unwrap();
        assert!(!r.fallback);
        assert!(r.per_run.iter().all(|x| x.peak_reduction == 0.0));
        assert_eq!(r.exit_code(), 0);
    }

    #[test]
    fn spec_validation() {
        let p = generate(&GenConfig::new(3, 2)).unwrap();
        let spec = RunSpec { tolerance: 1.5, ..quick(Approach::Cospis) };
        assert_eq!(run(&spec, &p).unwrap_err().exit_code(), 2);
        let spec = RunSpec { runs: 0, ..quick(Approach::Det) };
        assert!(matches!(run(&spec, &p), Err(RunError::InvalidSpec(_))));
    }

    #[test]
    fn cell_matches_single_run() {
        let p = generate(&GenConfig::new(6, 3)).unwrap();
        let base = quick(Approach::Cospis);
        let s = sweep(&p, &[5], &[0.4], &base).unwrap();
        let r = run(&RunSpec { samples: 5, tolerance: 0.4, ..base.clone() }, &p).unwrap();
        assert_eq!(s.cells.len(), 1);
        let cell = s.cells[0].result.as_ref().unwrap();
        assert_eq!(cell.aggregates, r.aggregates);
        assert_eq!(cell.p_est, r.p_est);
        assert_eq!(s.to_csv().lines().count(), 2);
    }

    #[test]
    fn approach_strings() {
        for a in [Approach::None, Approach::Det, Approach::Cospis, Approach::SoruPk, Approach::Milp] {
            assert_eq!(a.to_string().parse::<Approach>().unwrap(), a);
        }
        assert!("cplex".parse::<Approach>().is_err());
    }
}
