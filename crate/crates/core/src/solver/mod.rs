//! Solving a [`ScheduleModel`]: exact branch-and-bound, anytime simulated
//! annealing, and a brute-force oracle for tests.

mod anneal;
mod compiled;
mod feasibility;
mod oracle;
mod profile;
mod search;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::domain::{peak_usage, Problem, Schedule};
use crate::estimators::{estimate_job, EstimatorKind};
use crate::model::{ConstraintRef, ModelError, ScheduleModel};
use crate::{Cores, Time};

use compiled::Compiled;
pub use oracle::{brute_force, OracleError, ORACLE_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    TimedOutWithIncumbent,
    TimedOutNoIncumbent,
}

impl SolveStatus {
    pub fn has_schedule(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible | SolveStatus::TimedOutWithIncumbent)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::TimedOutWithIncumbent => "timed-out-with-incumbent",
            SolveStatus::TimedOutNoIncumbent => "timed-out-no-incumbent",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Exact,
    LocalSearch,
    Auto,
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Strategy::Exact),
            "local-search" => Ok(Strategy::LocalSearch),
            "auto" => Ok(Strategy::Auto),
            other => Err(format!("unknown strategy {other:?} (expected exact|local-search|auto)")),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Exact => "exact",
            Strategy::LocalSearch => "local-search",
            Strategy::Auto => "auto",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveConfig {
    pub time_limit: Duration,
    pub seed: u64,
    pub strategy: Strategy,
    /// Job count above which `Auto` switches to local search.
    pub auto_threshold: usize,
    /// Branch-and-bound child evaluations before giving up.
    pub node_limit: u64,
    /// Annealing moves in total (split over restarts).
    pub search_iterations: u64,
    pub restarts: u32,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            time_limit: Duration::from_secs(900),
            seed: 0,
            strategy: Strategy::Auto,
            auto_threshold: 60,
            node_limit: 2_000_000,
            search_iterations: 1_000_000,
            restarts: 4,
        }
    }
}

/// Result of a solve. `objective` is the largest peak over the scenarios not
/// in `violated`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub starts: BTreeMap<String, Time>,
    pub scenario_peaks: Vec<Cores>,
    pub violated: BTreeSet<usize>,
    pub objective: Cores,
    pub status: SolveStatus,
    /// For `Infeasible`: a minimal conflicting constraint subset, when found.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core: Option<Vec<ConstraintRef>>,
    /// Deterministic effort spent (search nodes plus annealing moves).
    pub work: u64,
}

impl Solution {
    fn without_schedule(status: SolveStatus, work: u64) -> Self {
        Self {
            starts: BTreeMap::new(),
            scenario_peaks: Vec::new(),
            violated: BTreeSet::new(),
            objective: 0,
            status,
            core: None,
            work,
        }
    }

    pub fn schedule(&self) -> Schedule {
        Schedule { starts: self.starts.clone(), peak_estimate: self.objective }
    }

    /// Replays every constraint against the returned starts and violated
    /// set. Returns the broken invariants; empty means the solution is clean.
    pub fn audit(&self, m: &ScheduleModel) -> Vec<String> {
        let mut issues = Vec::new();
        if !self.status.has_schedule() {
            return issues;
        }
        let mut starts = Vec::with_capacity(m.start_vars.len());
        for v in &m.start_vars {
            match self.starts.get(&v.job) {
                Some(&s) if s >= v.lo && s <= v.hi => starts.push(s),
                Some(&s) => {
                    issues.push(format!("{} start {} outside [{}, {}]", v.job, s, v.lo, v.hi));
                    starts.push(s);
                }
                None => {
                    issues.push(format!("{} has no start", v.job));
                    return issues;
                }
            }
        }
        if self.violated.len() > m.tolerance_budget {
            issues.push(format!("{} violated scenarios exceed budget {}", self.violated.len(), m.tolerance_budget));
        }
        let exempt = |c_scenario: usize, relaxable: bool| relaxable && self.violated.contains(&c_scenario);
        for c in &m.deadline_constraints {
            if !exempt(c.scenario, c.relaxable) && !c.holds(&starts) {
                issues.push(format!("deadline of {} broken in scenario {}", m.start_vars[c.job].job, c.scenario));
            }
        }
        for c in &m.precedence_constraints {
            if !exempt(c.scenario, c.relaxable) && !c.holds(&starts) {
                issues.push(format!(
                    "{} before {} broken in scenario {}",
                    m.start_vars[c.parent].job, m.start_vars[c.child].job, c.scenario
                ));
            }
        }
        if self.scenario_peaks.len() != m.scenarios {
            issues.push(format!("{} scenario peaks for K = {}", self.scenario_peaks.len(), m.scenarios));
            return issues;
        }
        let mut objective = 0;
        for k in 0..m.scenarios {
            let peak = m.scenario_peak(k, &starts);
            if peak != self.scenario_peaks[k] {
                issues.push(format!("scenario {k} peak {} recorded as {}", peak, self.scenario_peaks[k]));
            }
            if !self.violated.contains(&k) {
                objective = objective.max(peak);
            }
        }
        if objective != self.objective {
            issues.push(format!("objective {} but non-violated peaks give {objective}", self.objective));
        }
        issues
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Greedy,
    Anneal,
    BranchAndBound,
}

/// Incumbent improvement event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Progress {
    pub phase: Phase,
    pub objective: Cores,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("time limit must be positive")]
    ZeroTimeLimit,
    #[error("solution failed self-audit: {0}")]
    Audit(String),
}

/// Shared work/clock budget.
pub(crate) struct Limits {
    work: u64,
    max_work: u64,
    deadline: Instant,
    pub clock_hit: bool,
    pub work_hit: bool,
}

impl Limits {
    fn new(max_work: u64, deadline: Instant) -> Self {
        Self { work: 0, max_work, deadline, clock_hit: false, work_hit: false }
    }

    fn with_cap(&self, extra: u64) -> Self {
        Self::new(self.work.saturating_add(extra).min(self.max_work), self.deadline).started_at(self.work)
    }

    fn started_at(mut self, work: u64) -> Self {
        self.work = work;
        self
    }

    #[inline]
    pub fn tick(&mut self) -> bool {
        self.work += 1;
        if self.work > self.max_work {
            self.work_hit = true;
            return false;
        }
        if self.work & 1023 == 0 && Instant::now() >= self.deadline {
            self.clock_hit = true;
            return false;
        }
        true
    }
}

pub fn solve(m: &ScheduleModel, cfg: &SolveConfig) -> Result<Solution, SolveError> {
    solve_with_observer(m, cfg, &mut |_| {})
}

/// [`solve`] reporting each new incumbent through `observer`.
pub fn solve_with_observer(
    m: &ScheduleModel,
    cfg: &SolveConfig,
    observer: &mut dyn FnMut(Progress),
) -> Result<Solution, SolveError> {
    if cfg.time_limit.is_zero() {
        return Err(SolveError::ZeroTimeLimit);
    }
    let started = Instant::now();
    let c = Compiled::new(m)?;
    let solution = run(m, &c, cfg, started, observer);
    let issues = solution.audit(m);
    if !issues.is_empty() {
        return Err(SolveError::Audit(issues.join("; ")));
    }
    Ok(solution)
}

const CORE_NODE_CAP: u64 = 200_000;

fn infeasible(m: &ScheduleModel, c: &Compiled, work: u64) -> Solution {
    let mut sol = Solution::without_schedule(SolveStatus::Infeasible, work);
    sol.core = feasibility::infeasible_core(m, &c.order, CORE_NODE_CAP)
        .map(|core| core.iter().map(|x| m.describe(x)).collect());
    sol
}

fn finish(c: &Compiled, m: &ScheduleModel, starts: &[Time], status: SolveStatus, work: u64) -> Solution {
    let eval = c.evaluate(starts).expect("incumbent must be feasible");
    Solution {
        starts: m.start_vars.iter().map(|v| v.job.clone()).zip(starts.iter().copied()).collect(),
        scenario_peaks: eval.peaks,
        violated: eval.violated,
        objective: eval.objective,
        status,
        core: None,
        work,
    }
}

fn run(
    m: &ScheduleModel,
    c: &Compiled,
    cfg: &SolveConfig,
    started: Instant,
    observer: &mut dyn FnMut(Progress),
) -> Solution {
    if c.empty_domain().is_some() || c.hard_infeasible() {
        return infeasible(m, c, 0);
    }
    let mut checker = feasibility::Checker::new(m, &c.order, CORE_NODE_CAP);
    if checker.check() == feasibility::Feasibility::Infeasible {
        return infeasible(m, c, 0);
    }

    let exact = match cfg.strategy {
        Strategy::Exact => true,
        Strategy::LocalSearch => false,
        Strategy::Auto => c.n <= cfg.auto_threshold,
    };
    let deadline = started + cfg.time_limit;
    let max_work = cfg.node_limit.saturating_add(cfg.search_iterations);
    let mut limits = Limits::new(max_work, deadline);

    let mut emit = |phase: Phase, objective: Cores| {
        observer(Progress { phase, objective, elapsed: started.elapsed() })
    };

    // greedy seed
    let mut best: Option<(Cores, Vec<Time>)> = None;
    let initial = match search::greedy(c) {
        Some(starts) => {
            if let Some(eval) = c.evaluate(&starts) {
                emit(Phase::Greedy, eval.objective);
                best = Some((eval.objective, starts.clone()));
            }
            starts
        }
        None => c.lo.clone(),
    };

    // the exact search only needs a warm start, scaled to the instance
    let floor = search::Dive::new(c).root_bound();
    let warm = 2000u64.saturating_mul((c.n * c.k.max(1)).max(10 * c.n) as u64);
    let iterations = if exact { cfg.search_iterations.min(warm) } else { cfg.search_iterations };
    let restarts = if exact { 1 } else { cfg.restarts.max(1) };
    let per_restart = iterations / u64::from(restarts);
    let proven = |best: &Option<(Cores, Vec<Time>)>| best.as_ref().is_some_and(|b| b.0 <= floor);
    if per_restart > 0 && !proven(&best) {
        let mut anneal_limits = limits.with_cap(iterations);
        let result = anneal::anneal(
            c,
            initial,
            cfg.seed,
            per_restart,
            restarts,
            &mut anneal_limits,
            best.clone(),
            floor,
            &mut |obj| emit(Phase::Anneal, obj),
        );
        limits.work = anneal_limits.work;
        limits.clock_hit |= anneal_limits.clock_hit;
        if let Some((_, starts)) = result.best {
            // re-derive the exempted set optimally for these starts
            if let Some(eval) = c.evaluate(&starts) {
                if best.as_ref().is_none_or(|b| eval.objective < b.0) {
                    best = Some((eval.objective, starts));
                }
            }
        }
    }

    if !exact {
        let work = limits.work;
        return match best {
            Some((_, starts)) => {
                let status = if limits.clock_hit {
                    SolveStatus::TimedOutWithIncumbent
                } else {
                    SolveStatus::Feasible
                };
                finish(c, m, &starts, status, work)
            }
            None => Solution::without_schedule(SolveStatus::TimedOutNoIncumbent, work),
        };
    }

    let outcome = if proven(&best) {
        search::Outcome::Exhausted
    } else if limits.clock_hit {
        search::Outcome::Stopped
    } else {
        limits.max_work = limits.work.saturating_add(cfg.node_limit);
        search::branch_and_bound(c, &mut best, &mut limits, &mut |obj| emit(Phase::BranchAndBound, obj))
    };
    let work = limits.work;
    match (outcome, best) {
        (search::Outcome::Exhausted, Some((_, starts))) => finish(c, m, &starts, SolveStatus::Optimal, work),
        (search::Outcome::Exhausted, None) => infeasible(m, c, work),
        (search::Outcome::Stopped, Some((_, starts))) => {
            finish(c, m, &starts, SolveStatus::TimedOutWithIncumbent, work)
        }
        (search::Outcome::Stopped, None) => Solution::without_schedule(SolveStatus::TimedOutNoIncumbent, work),
    }
}

/// Every job at its requested start; the objective is the peak of the
/// P100 estimates at those starts.
pub fn fallback_manual(p: &Problem) -> Solution {
    let intervals: Vec<(Time, Time, Cores)> = p
        .jobs
        .iter()
        .filter_map(|j| estimate_job(j, EstimatorKind::P100).ok().map(|e| (j.q, e.d_hat, e.r_hat)))
        .collect();
    let peak = peak_usage(intervals);
    Solution {
        starts: p.jobs.iter().map(|j| (j.id.clone(), j.q)).collect(),
        scenario_peaks: vec![peak],
        violated: BTreeSet::new(),
        objective: peak,
        status: SolveStatus::Feasible,
        core: None,
        work: 0,
    }
}
