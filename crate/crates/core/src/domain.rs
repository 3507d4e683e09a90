//! Jobs, problems, schedules and realized executions, plus the sweep-line
//! peak evaluator every other module leans on.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::fmt;

use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::{Cores, Time};

/// One historical execution of a job: how long it ran and how many cores it held.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(Time, Cores)", into = "(Time, Cores)")]
pub struct HistoryRecord {
    pub duration: Time,
    pub cpu: Cores,
}

impl HistoryRecord {
    pub fn new(duration: Time, cpu: Cores) -> Self {
        Self { duration, cpu }
    }
}

impl From<(Time, Cores)> for HistoryRecord {
    fn from((duration, cpu): (Time, Cores)) -> Self {
        Self { duration, cpu }
    }
}

impl From<HistoryRecord> for (Time, Cores) {
    fn from(r: HistoryRecord) -> Self {
        (r.duration, r.cpu)
    }
}

/// A job as submitted: requested start `q`, flexibility `f`, deadline `u`,
/// parent jobs and its paired (duration, cpu) history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobSpec {
    pub id: String,
    pub q: Time,
    pub f: Time,
    pub u: Time,
    #[serde(default)]
    pub deps: Vec<String>,
    pub history: Vec<HistoryRecord>,
}

impl JobSpec {
    /// Latest admissible start, `min(q + f, u)`.
    pub fn latest_start(&self) -> Time {
        (self.q + self.f).min(self.u)
    }

    pub fn max_duration(&self) -> Option<Time> {
        self.history.iter().map(|h| h.duration).max()
    }

    pub fn max_cpu(&self) -> Option<Cores> {
        self.history.iter().map(|h| h.cpu).max()
    }
}

/// A COS instance: the jobs to place and the fixed horizon they must run in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub horizon: Time,
    pub jobs: Vec<JobSpec>,
}

impl Problem {
    pub fn new(horizon: Time, jobs: Vec<JobSpec>) -> Self {
        Self { horizon, jobs }
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    pub fn job(&self, id: &str) -> Option<&JobSpec> {
        self.jobs.iter().find(|j| j.id == id)
    }

    /// Map from job id to its position in `jobs`. First occurrence wins on duplicates.
    pub fn index(&self) -> HashMap<&str, usize> {
        let mut map = HashMap::with_capacity(self.jobs.len());
        for (i, j) in self.jobs.iter().enumerate() {
            map.entry(j.id.as_str()).or_insert(i);
        }
        map
    }

    /// Parent indices per job; unknown ids are skipped.
    pub fn parent_indices(&self) -> Vec<Vec<usize>> {
        let index = self.index();
        self.jobs
            .iter()
            .map(|j| {
                let mut ps: Vec<usize> =
                    j.deps.iter().filter_map(|d| index.get(d.as_str()).copied()).collect();
                ps.sort_unstable();
                ps.dedup();
                ps
            })
            .collect()
    }

    /// Largest recorded duration across all jobs (0 when there is no history).
    pub fn max_duration(&self) -> Time {
        self.jobs.iter().filter_map(JobSpec::max_duration).max().unwrap_or(0)
    }

    pub fn max_cpu(&self) -> Cores {
        self.jobs.iter().filter_map(JobSpec::max_cpu).max().unwrap_or(0)
    }

    /// Same problem with jobs sorted by id; history order is kept.
    pub fn canonicalized(&self) -> Problem {
        let mut jobs = self.jobs.clone();
        jobs.sort_by(|a, b| a.id.cmp(&b.id));
        Problem { horizon: self.horizon, jobs }
    }
}

/// Start times chosen for every job plus the capacity the model predicts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub starts: BTreeMap<String, Time>,
    pub peak_estimate: Cores,
}

impl Schedule {
    /// Every job at its requested start.
    pub fn manual(p: &Problem, peak_estimate: Cores) -> Self {
        Self {
            starts: p.jobs.iter().map(|j| (j.id.clone(), j.q)).collect(),
            peak_estimate,
        }
    }

    /// Checks `q <= s <= min(q + f, u)` for every job of `p`.
    pub fn check_domains(&self, p: &Problem) -> Result<(), String> {
        for job in &p.jobs {
            match self.starts.get(&job.id) {
                None => return Err(format!("job {} has no start", job.id)),
                Some(&s) if s < job.q || s > job.latest_start() => {
                    return Err(format!(
                        "job {} start {} outside [{}, {}]",
                        job.id,
                        s,
                        job.q,
                        job.latest_start()
                    ))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// Outcome of executing a schedule once against one stochastic draw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Realization {
    pub draws: BTreeMap<String, HistoryRecord>,
    pub actual_start: BTreeMap<String, Time>,
    pub actual_end: BTreeMap<String, Time>,
    pub observed_peak: Cores,
}

/// One broken invariant found by [`validate_problem`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateId(String),
    NegativeRequest(String),
    NegativeFlexibility(String),
    DeadlineNotAfterRequest(String),
    DeadlineBeyondHorizon { job: String, deadline: Time, horizon: Time },
    EmptyHistory(String),
    BadRecord { job: String, index: usize },
    SelfDependency(String),
    DanglingDependency { job: String, dep: String },
    Cycle(Vec<String>),
}

impl Violation {
    /// Job ids this violation is about.
    pub fn jobs(&self) -> Vec<&str> {
        match self {
            Violation::DuplicateId(j)
            | Violation::NegativeRequest(j)
            | Violation::NegativeFlexibility(j)
            | Violation::DeadlineNotAfterRequest(j)
            | Violation::EmptyHistory(j)
            | Violation::SelfDependency(j) => vec![j],
            Violation::DeadlineBeyondHorizon { job, .. }
            | Violation::BadRecord { job, .. }
            | Violation::DanglingDependency { job, .. } => vec![job],
            Violation::Cycle(members) => members.iter().map(String::as_str).collect(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId(j) => write!(f, "duplicate id: {j}"),
            Violation::NegativeRequest(j) => write!(f, "negative requested start: {j}"),
            Violation::NegativeFlexibility(j) => write!(f, "negative flexibility: {j}"),
            Violation::DeadlineNotAfterRequest(j) => {
                write!(f, "deadline not after requested start: {j}")
            }
            Violation::DeadlineBeyondHorizon { job, deadline, horizon } => {
                write!(f, "deadline {deadline} beyond horizon {horizon}: {job}")
            }
            Violation::EmptyHistory(j) => write!(f, "empty history: {j}"),
            Violation::BadRecord { job, index } => {
                write!(f, "history record {index} needs duration >= 1 and cpu >= 0: {job}")
            }
            Violation::SelfDependency(j) => write!(f, "self dependency: {j}"),
            Violation::DanglingDependency { job, dep } => {
                write!(f, "dangling dependency {dep}: {job}")
            }
            Violation::Cycle(members) => write!(f, "cycle: {{{}}}", members.join(",")),
        }
    }
}

/// Returns every invariant violation of `p`; an empty list means the problem is valid.
pub fn validate_problem(p: &Problem) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for job in &p.jobs {
        if !seen.insert(job.id.as_str()) {
            out.push(Violation::DuplicateId(job.id.clone()));
        }
    }
    for job in &p.jobs {
        if job.q < 0 {
            out.push(Violation::NegativeRequest(job.id.clone()));
        }
        if job.f < 0 {
            out.push(Violation::NegativeFlexibility(job.id.clone()));
        }
        if job.u <= job.q {
            out.push(Violation::DeadlineNotAfterRequest(job.id.clone()));
        }
        if job.u > p.horizon {
            out.push(Violation::DeadlineBeyondHorizon {
                job: job.id.clone(),
                deadline: job.u,
                horizon: p.horizon,
            });
        }
        if job.history.is_empty() {
            out.push(Violation::EmptyHistory(job.id.clone()));
        }
        for (index, rec) in job.history.iter().enumerate() {
            if rec.duration < 1 || rec.cpu < 0 {
                out.push(Violation::BadRecord { job: job.id.clone(), index });
            }
        }
        for dep in &job.deps {
            if *dep == job.id {
                out.push(Violation::SelfDependency(job.id.clone()));
            } else if !seen.contains(dep.as_str()) {
                out.push(Violation::DanglingDependency { job: job.id.clone(), dep: dep.clone() });
            }
        }
    }
    out.extend(find_cycles(p).into_iter().map(Violation::Cycle));
    out
}

/// Strongly connected components with more than one member, each sorted by id.
fn find_cycles(p: &Problem) -> Vec<Vec<String>> {
    let mut graph = DiGraph::<usize, ()>::new();
    let nodes: Vec<_> = (0..p.jobs.len()).map(|i| graph.add_node(i)).collect();
    for (child, parents) in p.parent_indices().iter().enumerate() {
        for &parent in parents {
            if parent != child {
                graph.add_edge(nodes[parent], nodes[child], ());
            }
        }
    }
    let mut cycles: Vec<Vec<String>> = petgraph::algo::tarjan_scc(&graph)
        .into_iter()
        .filter(|c| c.len() > 1)
        .map(|c| {
            let mut ids: Vec<String> = c.iter().map(|n| p.jobs[graph[*n]].id.clone()).collect();
            ids.sort();
            ids
        })
        .collect();
    cycles.sort();
    cycles
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OrderError {
    #[error("cycle: {{{}}}", .0.join(","))]
    Cycle(Vec<String>),
}

/// Job indices in dependency order; ties broken by id ascending.
pub fn topological_indices(p: &Problem) -> Result<Vec<usize>, OrderError> {
    let parents = p.parent_indices();
    let n = p.jobs.len();
    let mut indegree = vec![0usize; n];
    let mut children = vec![Vec::new(); n];
    for (child, ps) in parents.iter().enumerate() {
        for &parent in ps {
            if parent == child {
                return Err(OrderError::Cycle(vec![p.jobs[child].id.clone()]));
            }
            indegree[child] += 1;
            children[parent].push(child);
        }
    }
    let mut ready: BinaryHeap<Reverse<(&str, usize)>> = (0..n)
        .filter(|&i| indegree[i] == 0)
        .map(|i| Reverse((p.jobs[i].id.as_str(), i)))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse((_, i))) = ready.pop() {
        order.push(i);
        for &c in &children[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(Reverse((p.jobs[c].id.as_str(), c)));
            }
        }
    }
    if order.len() < n {
        let members = find_cycles(p).into_iter().next().unwrap_or_else(|| {
            (0..n).filter(|&i| indegree[i] > 0).map(|i| p.jobs[i].id.clone()).collect()
        });
        return Err(OrderError::Cycle(members));
    }
    Ok(order)
}

/// Job ids in dependency order; ties broken by id ascending.
pub fn topological_order(p: &Problem) -> Result<Vec<String>, OrderError> {
    Ok(topological_indices(p)?.into_iter().map(|i| p.jobs[i].id.clone()).collect())
}

/// Maximum total demand over time of half-open intervals `[start, start + duration)`.
///
/// Ends are processed before starts at the same instant, so back-to-back
/// intervals never stack. Returns 0 for an empty input.
pub fn peak_usage<I>(intervals: I) -> Cores
where
    I: IntoIterator<Item = (Time, Time, Cores)>,
{
    let mut events: Vec<(Time, Cores)> = Vec::new();
    for (start, duration, demand) in intervals {
        debug_assert!(duration >= 1 && demand >= 0);
        if demand == 0 {
            continue;
        }
        events.push((start, demand));
        events.push((start + duration, -demand));
    }
    // negative deltas sort first at equal times
    events.sort_unstable();
    let mut level = 0;
    let mut peak = 0;
    for (_, delta) in events {
        level += delta;
        peak = peak.max(level);
    }
    peak
}
