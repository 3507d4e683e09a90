//! Temporal feasibility (ignoring the peak) and deletion-filter cores.
//!
//! A set of kept scenarios is jointly feasible iff the earliest-start
//! propagation over their precedence constraints stays under every deadline
//! and domain upper bound. Choosing which scenarios to exempt is a
//! budget-constrained subset search: scenarios that cannot hold on their own
//! are exempted first, the rest are decided most-conflicting first.

use crate::model::{ModelConstraint, ScheduleModel};
use crate::Time;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Feasibility {
    Feasible,
    Infeasible,
    Unknown,
}

pub(crate) struct Checker<'a> {
    m: &'a ScheduleModel,
    order: &'a [usize],
    pub deadline_on: Vec<bool>,
    pub precedence_on: Vec<bool>,
    nodes: u64,
    node_cap: u64,
}

impl<'a> Checker<'a> {
    pub fn new(m: &'a ScheduleModel, order: &'a [usize], node_cap: u64) -> Self {
        Self {
            m,
            order,
            deadline_on: vec![true; m.deadline_constraints.len()],
            precedence_on: vec![true; m.precedence_constraints.len()],
            nodes: 0,
            node_cap,
        }
    }

    fn joint(&mut self, kept: &[bool]) -> bool {
        self.nodes += 1;
        let m = self.m;
        let n = m.start_vars.len();
        let mut est: Vec<Time> = m.start_vars.iter().map(|v| v.lo).collect();
        let mut ub: Vec<Time> = m.start_vars.iter().map(|v| v.hi).collect();
        for (i, c) in m.deadline_constraints.iter().enumerate() {
            if self.deadline_on[i] && (!c.relaxable || kept[c.scenario]) {
                ub[c.job] = ub[c.job].min(c.deadline - c.duration);
            }
        }
        let mut incoming: Vec<Vec<(usize, Time)>> = vec![Vec::new(); n];
        for (i, c) in m.precedence_constraints.iter().enumerate() {
            if self.precedence_on[i] && (!c.relaxable || kept[c.scenario]) {
                incoming[c.child].push((c.parent, c.parent_duration));
            }
        }
        for &j in self.order {
            for &(p, d) in &incoming[j] {
                est[j] = est[j].max(est[p] + d);
            }
            if est[j] > ub[j] {
                return false;
            }
        }
        true
    }

    pub fn check(&mut self) -> Feasibility {
        let k = self.m.scenarios;
        let budget = self.m.tolerance_budget.min(k);
        if self.m.start_vars.iter().any(|v| v.lo > v.hi) {
            return Feasibility::Infeasible;
        }
        if !self.joint(&vec![false; k]) {
            return Feasibility::Infeasible;
        }
        let mut single = vec![false; k];
        let mut forced = 0;
        let mut alive = Vec::new();
        for s in 0..k {
            single[s] = true;
            if self.joint(&single) {
                alive.push(s);
            } else {
                forced += 1;
            }
            single[s] = false;
        }
        if forced > budget {
            return Feasibility::Infeasible;
        }
        if self.joint(&{
            let mut all = vec![false; k];
            for &s in &alive {
                all[s] = true;
            }
            all
        }) {
            return Feasibility::Feasible;
        }
        // most pairwise conflicts first
        let mut conflicts = vec![0usize; k];
        for a in 0..alive.len() {
            for b in a + 1..alive.len() {
                let mut kept = vec![false; k];
                kept[alive[a]] = true;
                kept[alive[b]] = true;
                if !self.joint(&kept) {
                    conflicts[alive[a]] += 1;
                    conflicts[alive[b]] += 1;
                }
            }
        }
        alive.sort_by_key(|&s| (std::cmp::Reverse(conflicts[s]), s));
        let mut kept = vec![false; k];
        self.search(&alive, 0, &mut kept, budget - forced)
    }

    fn search(&mut self, alive: &[usize], i: usize, kept: &mut Vec<bool>, skips_left: usize) -> Feasibility {
        if self.nodes > self.node_cap {
            return Feasibility::Unknown;
        }
        if i == alive.len() {
            return Feasibility::Feasible;
        }
        let s = alive[i];
        kept[s] = true;
        let mut unknown = false;
        if self.joint(kept) {
            match self.search(alive, i + 1, kept, skips_left) {
                Feasibility::Feasible => return Feasibility::Feasible,
                Feasibility::Unknown => unknown = true,
                Feasibility::Infeasible => {}
            }
        }
        kept[s] = false;
        if skips_left > 0 {
            match self.search(alive, i + 1, kept, skips_left - 1) {
                Feasibility::Feasible => return Feasibility::Feasible,
                Feasibility::Unknown => unknown = true,
                Feasibility::Infeasible => {}
            }
        }
        if unknown {
            Feasibility::Unknown
        } else {
            Feasibility::Infeasible
        }
    }
}

/// Deletion filter: drops every constraint whose removal keeps the model
/// infeasible. `None` if the model is not proven infeasible or a probe is
/// inconclusive within the node cap.
pub(crate) fn infeasible_core(
    m: &ScheduleModel,
    order: &[usize],
    node_cap: u64,
) -> Option<Vec<ModelConstraint>> {
    if let Some(j) = m.start_vars.iter().position(|v| v.lo > v.hi) {
        return Some(vec![ModelConstraint::Domain(j)]);
    }
    let mut checker = Checker::new(m, order, node_cap);
    if checker.check() != Feasibility::Infeasible {
        return None;
    }
    for i in 0..checker.deadline_on.len() {
        checker.deadline_on[i] = false;
        if checker.check() != Feasibility::Infeasible {
            checker.deadline_on[i] = true;
        }
    }
    for i in 0..checker.precedence_on.len() {
        checker.precedence_on[i] = false;
        if checker.check() != Feasibility::Infeasible {
            checker.precedence_on[i] = true;
        }
    }
    if checker.nodes > checker.node_cap {
        return None;
    }
    let mut core: Vec<ModelConstraint> = Vec::new();
    core.extend((0..checker.deadline_on.len()).filter(|&i| checker.deadline_on[i]).map(ModelConstraint::Deadline));
    core.extend(
        (0..checker.precedence_on.len()).filter(|&i| checker.precedence_on[i]).map(ModelConstraint::Precedence),
    );
    Some(core)
}
