//! Solver-neutral optimization model and the builders that translate a
//! [`Problem`] into it.
//!
//! Every builder emits the same shape: integer start variables with their
//! flexibility window, deadline and precedence constraints tagged with the
//! scenario they belong to, and either one cumulative group per scenario or
//! (for the linearized variant) the pairwise start-event encoding. The
//! objective is always `minimize max { p_k : v_k = 0 }`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::domain::{validate_problem, Problem, Violation};
use crate::estimators::{estimate_job, EstimateError, EstimatedJob, EstimatorKind};
use crate::scenarios::ScenarioSet;
use crate::{Cores, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "estimator")]
pub enum ModelKind {
    Det(EstimatorKind),
    Cospis,
    SoruPk,
    Milp(EstimatorKind),
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Det(k) => write!(f, "det:{k}"),
            ModelKind::Cospis => f.write_str("cospis"),
            ModelKind::SoruPk => f.write_str("soru-pk"),
            ModelKind::Milp(k) => write!(f, "milp:{k}"),
        }
    }
}

/// Integer start variable with domain `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StartVar {
    pub job: String,
    pub lo: Time,
    pub hi: Time,
}

impl StartVar {
    pub fn domain_size(&self) -> u64 {
        (self.hi - self.lo + 1).max(0) as u64
    }
}

/// `s_job + duration <= deadline (+ M v_scenario when relaxable)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeadlineConstraint {
    pub job: usize,
    pub scenario: usize,
    pub duration: Time,
    pub deadline: Time,
    pub relaxable: bool,
}

impl DeadlineConstraint {
    pub fn holds(&self, starts: &[Time]) -> bool {
        starts[self.job] + self.duration <= self.deadline
    }
}

/// `s_parent + parent_duration <= s_child (+ M v_scenario when relaxable)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrecedenceConstraint {
    pub parent: usize,
    pub child: usize,
    pub scenario: usize,
    pub parent_duration: Time,
    pub relaxable: bool,
}

impl PrecedenceConstraint {
    pub fn holds(&self, starts: &[Time]) -> bool {
        starts[self.parent] + self.parent_duration <= starts[self.child]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Task {
    pub job: usize,
    pub duration: Time,
    pub demand: Cores,
}

/// Cumulative constraint of one scenario: demand in progress never exceeds `p_k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CumulativeGroup {
    pub scenario: usize,
    pub tasks: Vec<Task>,
}

impl CumulativeGroup {
    pub fn peak(&self, starts: &[Time]) -> Cores {
        crate::domain::peak_usage(self.tasks.iter().map(|t| (starts[t.job], t.duration, t.demand)))
    }
}

/// Pairwise variables of the start-event encoding for ordered pair `(j, i)`:
/// `delta1`, `delta2` booleans and `res` in `[0, res_upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairVars {
    pub j: usize,
    pub i: usize,
    pub res_upper: Cores,
}

/// Values of one pair's auxiliaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairValues {
    pub delta1: i64,
    pub delta2: i64,
    pub res: Cores,
}

/// Start-event (big-M) encoding of the peak: at every job start, the job's
/// own demand plus the demand of every job still running bounds `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearizedVars {
    /// Estimated (duration, demand) per job.
    pub tasks: Vec<Task>,
    pub pairs: Vec<PairVars>,
}

impl LinearizedVars {
    /// Smallest feasible `(delta1, delta2, res)` for pair `(j, i)` at the given starts:
    ///
    /// * `delta1 * M >= s_j - s_i + 1`
    /// * `delta2 * M >= s_i + d_i - s_j`
    /// * `res <= delta1 * r_i`, `res <= delta2 * r_i`
    /// * `res >= r_i - (2 - delta1 - delta2) * M`
    ///
    /// `None` when `M` is too small for the bounds to be satisfiable.
    pub fn min_pair_values(
        big_m: Cores,
        s_j: Time,
        s_i: Time,
        d_i: Time,
        r_i: Cores,
    ) -> Option<PairValues> {
        let need1 = s_j - s_i + 1;
        let need2 = s_i + d_i - s_j;
        if need1 > big_m || need2 > big_m {
            return None;
        }
        let delta1 = i64::from(need1 > 0);
        let delta2 = i64::from(need2 > 0);
        let res = (r_i - (2 - delta1 - delta2) * big_m).max(0);
        if res > delta1.min(delta2) * r_i {
            return None;
        }
        Some(PairValues { delta1, delta2, res })
    }

    /// Left-hand side `r_j + sum_{i != j} res_ji` at every job's start event.
    pub fn event_loads(&self, starts: &[Time], big_m: Cores) -> Option<Vec<Cores>> {
        let mut loads: Vec<Cores> = vec![0; starts.len()];
        for t in &self.tasks {
            loads[t.job] += t.demand;
        }
        let by_job: HashMap<usize, &Task> = self.tasks.iter().map(|t| (t.job, t)).collect();
        for pair in &self.pairs {
            let ti = by_job[&pair.i];
            let v = Self::min_pair_values(big_m, starts[pair.j], starts[pair.i], ti.duration, ti.demand)?;
            loads[pair.j] += v.res;
        }
        Some(loads)
    }

    /// Smallest `p` the start-event constraints allow at these starts.
    pub fn peak(&self, starts: &[Time], big_m: Cores) -> Option<Cores> {
        self.event_loads(starts, big_m).map(|l| l.into_iter().max().unwrap_or(0))
    }
}

/// Which constraint of a model a diagnostic refers to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum ConstraintRef {
    Domain { job: String },
    Deadline { job: String, scenario: usize },
    Precedence { parent: String, child: String, scenario: usize },
}

impl fmt::Display for ConstraintRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintRef::Domain { job } => write!(f, "domain of {job}"),
            ConstraintRef::Deadline { job, scenario } => {
                write!(f, "deadline of {job} in scenario {scenario}")
            }
            ConstraintRef::Precedence { parent, child, scenario } => {
                write!(f, "{parent} before {child} in scenario {scenario}")
            }
        }
    }
}

/// The optimization model every builder produces and the solver consumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleModel {
    pub kind: ModelKind,
    pub horizon: Time,
    pub start_vars: Vec<StartVar>,
    /// Number of scenarios `K`; one violation boolean `v_k` each.
    pub scenarios: usize,
    /// `floor(K * alpha)`: at most this many `v_k` may be 1.
    pub tolerance_budget: usize,
    pub deadline_constraints: Vec<DeadlineConstraint>,
    pub precedence_constraints: Vec<PrecedenceConstraint>,
    pub cumulative_groups: Vec<CumulativeGroup>,
    pub big_m: Cores,
    pub linearized: Option<LinearizedVars>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid problem: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidProblem(Vec<Violation>),
    #[error("structurally infeasible: {job}: {reason}")]
    StructurallyInfeasible { job: String, reason: String },
    #[error("tolerance {0} outside [0, 1]")]
    Tolerance(f64),
    #[error("scenario set does not cover job {0} with the expected number of draws")]
    ScenarioMismatch(String),
    #[error("scenario set is empty")]
    NoScenarios,
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("malformed model: {0}")]
    Malformed(String),
}

/// `M = max(T + max duration + 1, max cpu)`.
pub fn big_m_for(p: &Problem) -> Cores {
    (p.horizon + p.max_duration() + 1).max(p.max_cpu())
}

/// `floor(K * alpha)`, robust to the representation error of decimal alphas.
pub fn tolerance_budget(k: usize, alpha: f64) -> usize {
    ((k as f64) * alpha + 1e-9).floor() as usize
}

fn checked(p: &Problem) -> Result<HashMap<&str, usize>, ModelError> {
    let violations = validate_problem(p);
    if !violations.is_empty() {
        return Err(ModelError::InvalidProblem(violations));
    }
    Ok(p.index())
}

fn start_vars(p: &Problem) -> Vec<StartVar> {
    p.jobs
        .iter()
        .map(|j| StartVar { job: j.id.clone(), lo: j.q, hi: j.latest_start() })
        .collect()
}

fn estimated(p: &Problem, kind: EstimatorKind) -> Result<Vec<EstimatedJob>, ModelError> {
    let est: Vec<EstimatedJob> =
        p.jobs.iter().map(|j| estimate_job(j, kind)).collect::<Result<_, _>>()?;
    for e in &est {
        if e.q > (e.q + e.f).min(e.u) {
            return Err(ModelError::StructurallyInfeasible {
                job: e.id.clone(),
                reason: "empty start domain".into(),
            });
        }
        if e.d_hat > e.u - e.q {
            return Err(ModelError::StructurallyInfeasible {
                job: e.id.clone(),
                reason: format!("estimated duration {} exceeds u - q = {}", e.d_hat, e.u - e.q),
            });
        }
    }
    Ok(est)
}

fn deterministic_constraints(
    p: &Problem,
    index: &HashMap<&str, usize>,
    est: &[EstimatedJob],
) -> (Vec<DeadlineConstraint>, Vec<PrecedenceConstraint>) {
    let deadlines = est
        .iter()
        .enumerate()
        .map(|(j, e)| DeadlineConstraint {
            job: j,
            scenario: 0,
            duration: e.d_hat,
            deadline: e.u,
            relaxable: false,
        })
        .collect();
    let mut precedences = Vec::new();
    for (child, job) in p.jobs.iter().enumerate() {
        for dep in &job.deps {
            let parent = index[dep.as_str()];
            precedences.push(PrecedenceConstraint {
                parent,
                child,
                scenario: 0,
                parent_duration: est[parent].d_hat,
                relaxable: false,
            });
        }
    }
    (deadlines, precedences)
}

/// Deterministic model: each job collapsed to its point estimates, one
/// cumulative group, no tolerance.
pub fn build_det(p: &Problem, kind: EstimatorKind) -> Result<ScheduleModel, ModelError> {
    let index = checked(p)?;
    let est = estimated(p, kind)?;
    let (deadline_constraints, precedence_constraints) = deterministic_constraints(p, &index, &est);
    let tasks = est
        .iter()
        .enumerate()
        .map(|(j, e)| Task { job: j, duration: e.d_hat, demand: e.r_hat })
        .collect();
    Ok(ScheduleModel {
        kind: ModelKind::Det(kind),
        horizon: p.horizon,
        start_vars: start_vars(p),
        scenarios: 1,
        tolerance_budget: 0,
        deadline_constraints,
        precedence_constraints,
        cumulative_groups: vec![CumulativeGroup { scenario: 0, tasks }],
        big_m: big_m_for(p),
        linearized: None,
    })
}

/// Deterministic estimates with the peak encoded through pairwise
/// start-event variables instead of a cumulative group.
pub fn build_milp(p: &Problem, kind: EstimatorKind) -> Result<ScheduleModel, ModelError> {
    let index = checked(p)?;
    let est = estimated(p, kind)?;
    let (deadline_constraints, precedence_constraints) = deterministic_constraints(p, &index, &est);
    let tasks: Vec<Task> = est
        .iter()
        .enumerate()
        .map(|(j, e)| Task { job: j, duration: e.d_hat, demand: e.r_hat })
        .collect();
    let n = tasks.len();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1));
    for j in 0..n {
        for i in 0..n {
            if i != j {
                pairs.push(PairVars { j, i, res_upper: tasks[i].demand });
            }
        }
    }
    Ok(ScheduleModel {
        kind: ModelKind::Milp(kind),
        horizon: p.horizon,
        start_vars: start_vars(p),
        scenarios: 1,
        tolerance_budget: 0,
        deadline_constraints,
        precedence_constraints,
        cumulative_groups: Vec::new(),
        big_m: big_m_for(p),
        linearized: Some(LinearizedVars { tasks, pairs }),
    })
}

/// Pair-sampled model: constraints and a cumulative group per scenario,
/// any `floor(K * alpha)` scenarios may be ignored.
pub fn build_cospis(
    p: &Problem,
    scen: &ScenarioSet,
    alpha: f64,
) -> Result<ScheduleModel, ModelError> {
    build_sampled(p, scen, alpha, ModelKind::Cospis)
}

/// Same structure as [`build_cospis`], fed with a duration-only scenario set.
pub fn build_soru_pk(
    p: &Problem,
    scen: &ScenarioSet,
    alpha: f64,
) -> Result<ScheduleModel, ModelError> {
    build_sampled(p, scen, alpha, ModelKind::SoruPk)
}

fn build_sampled(
    p: &Problem,
    scen: &ScenarioSet,
    alpha: f64,
    kind: ModelKind,
) -> Result<ScheduleModel, ModelError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ModelError::Tolerance(alpha));
    }
    let index = checked(p)?;
    let k = scen.k;
    if k == 0 {
        return Err(ModelError::NoScenarios);
    }
    let mut draws = Vec::with_capacity(p.len());
    for job in &p.jobs {
        match scen.draws.get(&job.id) {
            Some(d) if d.len() == k => draws.push(d),
            _ => return Err(ModelError::ScenarioMismatch(job.id.clone())),
        }
    }

    let mut deadline_constraints = Vec::with_capacity(k * p.len());
    let mut precedence_constraints = Vec::new();
    let mut cumulative_groups = Vec::with_capacity(k);
    for scenario in 0..k {
        for (j, job) in p.jobs.iter().enumerate() {
            deadline_constraints.push(DeadlineConstraint {
                job: j,
                scenario,
                duration: draws[j][scenario].duration,
                deadline: job.u,
                relaxable: true,
            });
        }
        for (child, job) in p.jobs.iter().enumerate() {
            for dep in &job.deps {
                let parent = index[dep.as_str()];
                precedence_constraints.push(PrecedenceConstraint {
                    parent,
                    child,
                    scenario,
                    parent_duration: draws[parent][scenario].duration,
                    relaxable: true,
                });
            }
        }
        let tasks = draws
            .iter()
            .enumerate()
            .map(|(j, d)| Task { job: j, duration: d[scenario].duration, demand: d[scenario].cpu })
            .collect();
        cumulative_groups.push(CumulativeGroup { scenario, tasks });
    }

    // sampled durations may exceed the history maximum only if the set was
    // built elsewhere; keep M large enough for every relaxed deadline
    let max_draw = draws.iter().flat_map(|d| d.iter().map(|r| r.duration)).max().unwrap_or(0);
    let max_cpu = draws.iter().flat_map(|d| d.iter().map(|r| r.cpu)).max().unwrap_or(0);
    let big_m = big_m_for(p).max(p.horizon + max_draw + 1).max(max_cpu);

    Ok(ScheduleModel {
        kind,
        horizon: p.horizon,
        start_vars: start_vars(p),
        scenarios: k,
        tolerance_budget: tolerance_budget(k, alpha),
        deadline_constraints,
        precedence_constraints,
        cumulative_groups,
        big_m,
        linearized: None,
    })
}

impl ScheduleModel {
    pub fn job_count(&self) -> usize {
        self.start_vars.len()
    }

    pub fn job_index(&self) -> BTreeMap<&str, usize> {
        self.start_vars.iter().enumerate().map(|(i, v)| (v.job.as_str(), i)).collect()
    }

    /// Checks the structural invariants the solver relies on.
    pub fn check(&self) -> Result<(), ModelError> {
        let n = self.start_vars.len();
        let bad = |msg: String| Err(ModelError::Malformed(msg));
        if self.scenarios == 0 {
            return bad("K must be at least 1".into());
        }
        if self.tolerance_budget > self.scenarios {
            return bad(format!(
                "tolerance budget {} exceeds K = {}",
                self.tolerance_budget, self.scenarios
            ));
        }
        if self.big_m < self.horizon {
            return bad(format!("M = {} below horizon {}", self.big_m, self.horizon));
        }
        for c in &self.deadline_constraints {
            if c.job >= n || c.scenario >= self.scenarios {
                return bad(format!("deadline constraint references job {} / scenario {}", c.job, c.scenario));
            }
        }
        for c in &self.precedence_constraints {
            if c.parent >= n || c.child >= n || c.scenario >= self.scenarios || c.parent == c.child {
                return bad(format!(
                    "precedence constraint {} -> {} in scenario {}",
                    c.parent, c.child, c.scenario
                ));
            }
        }
        for g in &self.cumulative_groups {
            if g.scenario >= self.scenarios {
                return bad(format!("cumulative group for scenario {}", g.scenario));
            }
            if g.tasks.iter().any(|t| t.job >= n || t.duration < 1 || t.demand < 0) {
                return bad(format!("bad task in cumulative group {}", g.scenario));
            }
        }
        if let Some(lin) = &self.linearized {
            if self.scenarios != 1 || !self.cumulative_groups.is_empty() {
                return bad("linearized models carry exactly one scenario and no cumulative groups".into());
            }
            if lin.tasks.iter().any(|t| t.job >= n || t.duration < 1 || t.demand < 0) {
                return bad("bad task in linearized encoding".into());
            }
            if lin.pairs.iter().any(|p| p.i >= n || p.j >= n || p.i == p.j) {
                return bad("bad pair in linearized encoding".into());
            }
            let max_r = lin.tasks.iter().map(|t| t.demand).max().unwrap_or(0);
            if self.big_m < max_r {
                return bad(format!("M = {} below largest demand {max_r}", self.big_m));
            }
        }
        Ok(())
    }

    /// Peak of scenario `k` at the given starts, using whichever peak
    /// encoding the model carries.
    pub fn scenario_peak(&self, k: usize, starts: &[Time]) -> Cores {
        match &self.linearized {
            Some(lin) => lin.peak(starts, self.big_m).unwrap_or(Cores::MAX),
            None => self
                .cumulative_groups
                .iter()
                .filter(|g| g.scenario == k)
                .map(|g| g.peak(starts))
                .max()
                .unwrap_or(0),
        }
    }

    pub fn describe(&self, c: &ModelConstraint) -> ConstraintRef {
        match *c {
            ModelConstraint::Domain(j) => ConstraintRef::Domain { job: self.start_vars[j].job.clone() },
            ModelConstraint::Deadline(i) => {
                let d = &self.deadline_constraints[i];
                ConstraintRef::Deadline { job: self.start_vars[d.job].job.clone(), scenario: d.scenario }
            }
            ModelConstraint::Precedence(i) => {
                let d = &self.precedence_constraints[i];
                ConstraintRef::Precedence {
                    parent: self.start_vars[d.parent].job.clone(),
                    child: self.start_vars[d.child].job.clone(),
                    scenario: d.scenario,
                }
            }
        }
    }

    /// Human-readable listing, one declaration or constraint per line.
    ///
    /// ```text
    /// model det:p50 jobs=2 scenarios=1 budget=0 M=31 horizon=20
    /// var s[a] in [0, 10]
    /// deadline k=0: s[a] + 5 <= 20
    /// precedence k=0: s[a] + 5 <= s[b] + M*v[0]
    /// cumulative k=0: p[0] >= usage{a:5x3, b:2x1}
    /// budget: sum v <= 0
    /// objective: minimize max{p[k] : v[k] = 0}
    /// ```
    pub fn to_text(&self) -> String {
        let name = |j: usize| self.start_vars[j].job.as_str();
        let relax = |r: bool, k: usize| if r { format!(" + M*v[{k}]") } else { String::new() };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "model {} jobs={} scenarios={} budget={} M={} horizon={}",
            self.kind,
            self.start_vars.len(),
            self.scenarios,
            self.tolerance_budget,
            self.big_m,
            self.horizon
        );
        for v in &self.start_vars {
            let _ = writeln!(out, "var s[{}] in [{}, {}]", v.job, v.lo, v.hi);
        }
        for c in &self.deadline_constraints {
            let _ = writeln!(
                out,
                "deadline k={}: s[{}] + {} <= {}{}",
                c.scenario,
                name(c.job),
                c.duration,
                c.deadline,
                relax(c.relaxable, c.scenario)
            );
        }
        for c in &self.precedence_constraints {
            let _ = writeln!(
                out,
                "precedence k={}: s[{}] + {} <= s[{}]{}",
                c.scenario,
                name(c.parent),
                c.parent_duration,
                name(c.child),
                relax(c.relaxable, c.scenario)
            );
        }
        for g in &self.cumulative_groups {
            let tasks: Vec<String> = g
                .tasks
                .iter()
                .map(|t| format!("{}:{}x{}", name(t.job), t.duration, t.demand))
                .collect();
            let _ = writeln!(out, "cumulative k={}: p[{}] >= usage{{{}}}", g.scenario, g.scenario, tasks.join(", "));
        }
        if let Some(lin) = &self.linearized {
            let task: HashMap<usize, &Task> = lin.tasks.iter().map(|t| (t.job, t)).collect();
            for pair in &lin.pairs {
                let (j, i) = (name(pair.j), name(pair.i));
                let ti = task[&pair.i];
                let _ = writeln!(out, "linear: M*d1[{j},{i}] >= s[{j}] - s[{i}] + 1");
                let _ = writeln!(out, "linear: M*d2[{j},{i}] >= s[{i}] + {} - s[{j}]", ti.duration);
                let _ = writeln!(
                    out,
                    "linear: res[{j},{i}] <= {r}*d1[{j},{i}]; res[{j},{i}] <= {r}*d2[{j},{i}]",
                    r = ti.demand
                );
                let _ = writeln!(
                    out,
                    "linear: res[{j},{i}] >= {} - (2 - d1[{j},{i}] - d2[{j},{i}])*M",
                    ti.demand
                );
            }
            for t in &lin.tasks {
                let _ = writeln!(out, "linear: p[0] >= {} + sum_i res[{},i]", t.demand, name(t.job));
            }
        }
        let _ = writeln!(out, "budget: sum v <= {}", self.tolerance_budget);
        let _ = writeln!(out, "objective: minimize max{{p[k] : v[k] = 0}}");
        out
    }
}

/// Index of a constraint within a [`ScheduleModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ModelConstraint {
    Domain(usize),
    Deadline(usize),
    Precedence(usize),
}
