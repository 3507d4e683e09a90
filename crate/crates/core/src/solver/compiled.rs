//! Dense, index-based view of a [`ScheduleModel`] used by the search code.

use std::collections::BTreeSet;

use crate::model::{ModelError, ScheduleModel, Task};
use crate::{Cores, Time};

/// Reachable "infinite" objective for infeasible scenarios.
pub(crate) const INF: Cores = Cores::MAX;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Edge {
    pub other: usize,
    pub scenario: usize,
    pub duration: Time,
    pub hard: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    pub n: usize,
    pub k: usize,
    pub budget: usize,
    pub big_m: Cores,
    pub lo: Vec<Time>,
    pub hi: Vec<Time>,
    /// Branching order: parents before children, ties by job id.
    pub order: Vec<usize>,
    /// Incoming precedence edges per job (`other` = parent).
    pub parents: Vec<Vec<Edge>>,
    /// `(deadline - duration)` bounds per job: (scenario, latest start, hard).
    pub deadlines: Vec<Vec<(usize, Time, bool)>>,
    /// Cumulative tasks per scenario, indexed by job.
    pub tasks: Vec<Vec<Option<(Time, Cores)>>>,
    pub linear: Option<Vec<(Time, Cores)>>,
    /// Latest start per scenario (soft constraints of that scenario plus
    /// every hard one), propagated backwards through successors.
    pub lst: Vec<Vec<Time>>,
    /// Earliest start per scenario propagated forwards from the domains.
    pub est: Vec<Vec<Time>>,
    pub hard_lst: Vec<Time>,
    pub hard_est: Vec<Time>,
    /// Profile length covering every possible interval.
    pub span: usize,
}

impl Compiled {
    pub fn new(m: &ScheduleModel) -> Result<Self, ModelError> {
        m.check()?;
        let n = m.start_vars.len();
        let k = m.scenarios;
        let lo: Vec<Time> = m.start_vars.iter().map(|v| v.lo).collect();
        let hi: Vec<Time> = m.start_vars.iter().map(|v| v.hi).collect();

        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for c in &m.precedence_constraints {
            let hard = !c.relaxable;
            parents[c.child].push(Edge { other: c.parent, scenario: c.scenario, duration: c.parent_duration, hard });
            children[c.parent].push(Edge { other: c.child, scenario: c.scenario, duration: c.parent_duration, hard });
        }
        let mut deadlines = vec![Vec::new(); n];
        for c in &m.deadline_constraints {
            deadlines[c.job].push((c.scenario, c.deadline - c.duration, !c.relaxable));
        }

        let mut tasks: Vec<Vec<Option<(Time, Cores)>>> = vec![vec![None; n]; k];
        for g in &m.cumulative_groups {
            for t in &g.tasks {
                let slot = &mut tasks[g.scenario][t.job];
                *slot = Some(match *slot {
                    // a job listed twice in one group stacks its demand
                    Some((d, r)) => (d.max(t.duration), r + t.demand),
                    None => (t.duration, t.demand),
                });
            }
        }
        let linear = m.linearized.as_ref().map(|lin| {
            let mut v = vec![(1, 0); n];
            for &Task { job, duration, demand } in &lin.tasks {
                v[job] = (duration, demand);
            }
            v
        });

        let order = order(m, &parents)?;

        let mut hard_lst = hi.clone();
        for &j in order.iter().rev() {
            for &(_, latest, hard) in &deadlines[j] {
                if hard {
                    hard_lst[j] = hard_lst[j].min(latest);
                }
            }
            for e in children[j].iter().filter(|e| e.hard) {
                hard_lst[j] = hard_lst[j].min(hard_lst[e.other] - e.duration);
            }
        }
        let mut hard_est = lo.clone();
        for &j in &order {
            for e in parents[j].iter().filter(|e| e.hard) {
                hard_est[j] = hard_est[j].max(hard_est[e.other] + e.duration);
            }
        }

        let mut lst = vec![hard_lst.clone(); k];
        let mut est = vec![hard_est.clone(); k];
        for s in 0..k {
            let lst_s = &mut lst[s];
            for &j in order.iter().rev() {
                for &(scenario, latest, _) in &deadlines[j] {
                    if scenario == s {
                        lst_s[j] = lst_s[j].min(latest);
                    }
                }
                for e in &children[j] {
                    if e.scenario == s || e.hard {
                        lst_s[j] = lst_s[j].min(lst_s[e.other] - e.duration);
                    }
                }
            }
            let est_s = &mut est[s];
            for &j in &order {
                for e in &parents[j] {
                    if e.scenario == s || e.hard {
                        est_s[j] = est_s[j].max(est_s[e.other] + e.duration);
                    }
                }
            }
        }

        let max_d = tasks
            .iter()
            .flatten()
            .flatten()
            .map(|t| t.0)
            .chain(linear.iter().flatten().map(|t| t.0))
            .max()
            .unwrap_or(1);
        let max_hi = hi.iter().copied().max().unwrap_or(0).max(0);
        let span = (max_hi + max_d + 1) as usize;

        Ok(Self {
            n,
            k,
            budget: m.tolerance_budget,
            big_m: m.big_m,
            lo,
            hi,
            order,
            parents,
            deadlines,
            tasks,
            linear,
            lst,
            est,
            hard_lst,
            hard_est,
            span,
        })
    }

    pub fn empty_domain(&self) -> Option<usize> {
        (0..self.n).find(|&j| self.lo[j] > self.hi[j])
    }

    /// Hard constraints alone admit no schedule.
    pub fn hard_infeasible(&self) -> bool {
        (0..self.n).any(|j| self.hard_est[j] > self.hard_lst[j])
    }

    /// Scenario `s` cannot be satisfied by any schedule.
    pub fn scenario_dead_at_root(&self, s: usize) -> bool {
        (0..self.n).any(|j| self.est[s][j] > self.lst[s][j])
    }

    /// Does scenario `s` hold (all of its constraints) at full starts?
    pub fn scenario_holds(&self, s: usize, starts: &[Time]) -> bool {
        (0..self.n).all(|j| {
            self.deadlines[j].iter().all(|&(sc, latest, hard)| hard || sc != s || starts[j] <= latest)
                && self.parents[j]
                    .iter()
                    .all(|e| e.hard || e.scenario != s || starts[e.other] + e.duration <= starts[j])
        })
    }

    pub fn hard_holds(&self, starts: &[Time]) -> bool {
        (0..self.n).all(|j| {
            starts[j] >= self.lo[j]
                && starts[j] <= self.hi[j]
                && self.deadlines[j].iter().all(|&(_, latest, hard)| !hard || starts[j] <= latest)
                && self.parents[j].iter().all(|e| !e.hard || starts[e.other] + e.duration <= starts[j])
        })
    }

    /// Peak of scenario `s` at full starts.
    pub fn peak(&self, s: usize, starts: &[Time]) -> Cores {
        match &self.linear {
            Some(tasks) => start_event_peak(tasks, starts, self.big_m),
            None => crate::domain::peak_usage(
                self.tasks[s]
                    .iter()
                    .enumerate()
                    .filter_map(|(j, t)| t.map(|(d, r)| (starts[j], d, r))),
            ),
        }
    }

    /// Objective of full starts with the best violated set, or `None` if
    /// more than `budget` scenarios fail (or a hard constraint does).
    pub fn evaluate(&self, starts: &[Time]) -> Option<Evaluation> {
        if !self.hard_holds(starts) {
            return None;
        }
        let peaks: Vec<Cores> = (0..self.k).map(|s| self.peak(s, starts)).collect();
        let holds: Vec<bool> = (0..self.k).map(|s| self.scenario_holds(s, starts)).collect();
        let weights: Vec<Cores> =
            (0..self.k).map(|s| if holds[s] { peaks[s] } else { INF }).collect();
        let objective = kth_largest(&weights, self.budget);
        if objective == INF {
            return None;
        }
        Some(Evaluation { violated: choose_violated(&weights, self.budget), objective, peaks })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Evaluation {
    pub objective: Cores,
    pub peaks: Vec<Cores>,
    pub violated: BTreeSet<usize>,
}

/// Start-event peak of the linearized encoding, via the closed-form minimal `res`.
pub(crate) fn start_event_peak(tasks: &[(Time, Cores)], starts: &[Time], big_m: Cores) -> Cores {
    (0..tasks.len())
        .map(|j| {
            tasks[j].1
                + (0..tasks.len())
                    .filter(|&i| i != j)
                    .map(|i| pair_res(starts[j], starts[i], tasks[i].0, tasks[i].1, big_m))
                    .sum::<Cores>()
        })
        .max()
        .unwrap_or(0)
}

/// Minimal `res_ji` for fixed starts.
#[inline]
pub(crate) fn pair_res(s_j: Time, s_i: Time, d_i: Time, r_i: Cores, big_m: Cores) -> Cores {
    let delta1 = i64::from(s_j - s_i + 1 > 0);
    let delta2 = i64::from(s_i + d_i - s_j > 0);
    (r_i - (2 - delta1 - delta2) * big_m).max(0)
}

/// The `(budget + 1)`-th largest weight: the objective once the `budget`
/// worst scenarios are exempted. 0 when every scenario can be exempted.
pub(crate) fn kth_largest(weights: &[Cores], budget: usize) -> Cores {
    if budget >= weights.len() {
        return 0;
    }
    let mut w = weights.to_vec();
    let idx = w.len() - 1 - budget;
    *w.select_nth_unstable(idx).1
}

/// The `budget` heaviest scenarios (ties to the lower index), or all when
/// the budget covers them.
pub(crate) fn choose_violated(weights: &[Cores], budget: usize) -> BTreeSet<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].cmp(&weights[a]).then(a.cmp(&b)));
    let mut chosen: BTreeSet<usize> = idx.into_iter().take(budget).collect();
    // exempting a scenario that is both feasible and not above the
    // objective changes nothing; keep the set minimal
    let objective = kth_largest(weights, budget);
    chosen.retain(|&s| weights[s] == INF || weights[s] > objective);
    chosen
}

fn order(m: &ScheduleModel, parents: &[Vec<Edge>]) -> Result<Vec<usize>, ModelError> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    let n = m.start_vars.len();
    let mut indeg = vec![0usize; n];
    let mut kids: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (c, ps) in parents.iter().enumerate() {
        for e in ps {
            if kids[e.other].insert(c) {
                indeg[c] += 1;
            }
        }
    }
    let mut ready: BinaryHeap<Reverse<(&str, usize)>> = (0..n)
        .filter(|&j| indeg[j] == 0)
        .map(|j| Reverse((m.start_vars[j].job.as_str(), j)))
        .collect();
    let mut out = Vec::with_capacity(n);
    while let Some(Reverse((_, j))) = ready.pop() {
        out.push(j);
        for &c in &kids[j] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.push(Reverse((m.start_vars[c].job.as_str(), c)));
            }
        }
    }
    if out.len() != n {
        return Err(ModelError::Malformed("precedence constraints contain a cycle".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kth_largest_budget() {
        assert_eq!(kth_largest(&[5, 9, 3], 0), 9);
        assert_eq!(kth_largest(&[5, 9, 3], 1), 5);
        assert_eq!(kth_largest(&[5, 9, 3], 2), 3);
        assert_eq!(kth_largest(&[5, 9, 3], 3), 0);
        assert_eq!(kth_largest(&[INF, 9, 3], 1), 9);
    }

    #[test]
    fn violated_choice() {
        assert_eq!(choose_violated(&[5, 9, 3], 1), BTreeSet::from([1]));
        assert_eq!(choose_violated(&[INF, 9, 3], 1), BTreeSet::from([0]));
        // ties: exempting one of two equal maxima gains nothing
        assert_eq!(choose_violated(&[9, 9, 3], 1), BTreeSet::new());
        assert_eq!(choose_violated(&[9, 9, 3], 3), BTreeSet::from([0, 1, 2]));
    }
}
