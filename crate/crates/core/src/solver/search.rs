//! Depth-first branch-and-bound over start times, plus the greedy dive that
//! seeds it.
//!
//! Jobs are fixed in topological order, so when a job is fixed all of its
//! parents already are. A scenario dies as soon as a fixed start breaks one
//! of its constraints or exceeds its backward-propagated latest start; a dead
//! scenario has to be exempted. The bound is the `(budget + 1)`-th largest
//! scenario lower bound, dead scenarios counting as infinite. Scenario lower
//! bounds come from the timetable (fixed intervals plus compulsory parts of
//! unfixed jobs), or for linearized models from the start-event loads among
//! fixed jobs.

use crate::solver::compiled::{kth_largest, pair_res, Compiled, INF};
use crate::solver::profile::Profile;
use crate::solver::Limits;
use crate::{Cores, Time};

pub(crate) struct Dive<'a> {
    c: &'a Compiled,
    starts: Vec<Time>,
    fixed: Vec<bool>,
    fixed_list: Vec<usize>,
    dead: Vec<bool>,
    dead_count: usize,
    killed: Vec<usize>,
    profiles: Vec<Profile>,
    loads: Vec<Cores>,
    weights: Vec<Cores>,
}

/// Undo token for one [`Dive::apply`].
pub(crate) struct Applied {
    job: usize,
    killed_mark: usize,
}

impl<'a> Dive<'a> {
    pub fn new(c: &'a Compiled) -> Self {
        let mut dead = vec![false; c.k];
        let mut dead_count = 0;
        for (s, d) in dead.iter_mut().enumerate() {
            if c.scenario_dead_at_root(s) {
                *d = true;
                dead_count += 1;
            }
        }
        let mut profiles = Vec::new();
        if c.linear.is_none() {
            profiles = (0..c.k).map(|_| Profile::new(c.span)).collect();
            for (s, prof) in profiles.iter_mut().enumerate() {
                if dead[s] {
                    continue;
                }
                for j in 0..c.n {
                    if let Some((d, r)) = c.tasks[s][j] {
                        let (from, to) = compulsory(c, s, j, d);
                        prof.add(from, to, r);
                    }
                }
            }
        }
        Self {
            c,
            starts: c.lo.clone(),
            fixed: vec![false; c.n],
            fixed_list: Vec::with_capacity(c.n),
            dead,
            dead_count,
            killed: Vec::new(),
            profiles,
            loads: vec![0; c.n],
            weights: vec![0; c.k],
        }
    }

    pub fn depth(&self) -> usize {
        self.fixed_list.len()
    }

    pub fn starts(&self) -> &[Time] {
        &self.starts
    }

    /// Values of the next job in order that respect every hard constraint.
    pub fn hard_range(&self, j: usize) -> (Time, Time) {
        let c = self.c;
        let mut from = c.lo[j].max(c.hard_est[j]);
        for e in c.parents[j].iter().filter(|e| e.hard) {
            debug_assert!(self.fixed[e.other]);
            from = from.max(self.starts[e.other] + e.duration);
        }
        (from, c.hard_lst[j].min(c.hi[j]))
    }

    pub fn apply(&mut self, j: usize, s: Time) -> Applied {
        let c = self.c;
        let killed_mark = self.killed.len();
        for k in 0..c.k {
            if self.dead[k] {
                continue;
            }
            let ok = s <= c.lst[k][j]
                && c.parents[j]
                    .iter()
                    .filter(|e| e.scenario == k && !e.hard)
                    .all(|e| self.starts[e.other] + e.duration <= s);
            if !ok {
                self.dead[k] = true;
                self.dead_count += 1;
                self.killed.push(k);
            }
        }
        self.starts[j] = s;
        self.fixed[j] = true;
        self.fixed_list.push(j);
        if let Some(tasks) = &c.linear {
            let (dj, rj) = tasks[j];
            let mut own = rj;
            for &i in &self.fixed_list[..self.fixed_list.len() - 1] {
                let (di, ri) = tasks[i];
                own += pair_res(s, self.starts[i], di, ri, c.big_m);
                self.loads[i] += pair_res(self.starts[i], s, dj, rj, c.big_m);
            }
            self.loads[j] = own;
        } else {
            for k in 0..c.k {
                if let Some((d, r)) = c.tasks[k][j] {
                    let (from, to) = compulsory(c, k, j, d);
                    let prof = &mut self.profiles[k];
                    prof.add(from, to, -r);
                    prof.add(s, s + d, r);
                }
            }
        }
        Applied { job: j, killed_mark }
    }

    pub fn undo(&mut self, a: Applied) {
        let c = self.c;
        let j = a.job;
        let s = self.starts[j];
        debug_assert_eq!(self.fixed_list.last(), Some(&j));
        self.fixed_list.pop();
        if let Some(tasks) = &c.linear {
            let (dj, rj) = tasks[j];
            for &i in &self.fixed_list {
                self.loads[i] -= pair_res(self.starts[i], s, dj, rj, c.big_m);
            }
            self.loads[j] = 0;
        } else {
            for k in 0..c.k {
                if let Some((d, r)) = c.tasks[k][j] {
                    let (from, to) = compulsory(c, k, j, d);
                    let prof = &mut self.profiles[k];
                    prof.add(s, s + d, -r);
                    prof.add(from, to, r);
                }
            }
        }
        self.fixed[j] = false;
        self.starts[j] = c.lo[j];
        for k in self.killed.drain(a.killed_mark..) {
            self.dead[k] = false;
            self.dead_count -= 1;
        }
    }

    /// Lower bound on the objective of any completion; `INF` when more
    /// scenarios are dead than the budget allows.
    pub fn bound(&mut self) -> Cores {
        let c = self.c;
        if self.dead_count > c.budget {
            return INF;
        }
        if c.linear.is_some() {
            let lb = self.fixed_list.iter().map(|&j| self.loads[j]).max().unwrap_or(0);
            return if self.dead[0] { kth_largest(&[INF], c.budget) } else { lb };
        }
        for k in 0..c.k {
            self.weights[k] = if self.dead[k] { INF } else { self.profiles[k].peak() };
        }
        kth_largest(&self.weights, c.budget)
    }

    /// Root lower bound: per scenario, the larger of the compulsory-part
    /// peak and the largest single demand.
    pub fn root_bound(&mut self) -> Cores {
        let c = self.c;
        if self.dead_count > c.budget {
            return INF;
        }
        if let Some(tasks) = &c.linear {
            let top = tasks.iter().map(|t| t.1).max().unwrap_or(0);
            return if self.dead[0] { kth_largest(&[INF], c.budget) } else { top };
        }
        for k in 0..c.k {
            let top = c.tasks[k].iter().flatten().map(|t| t.1).max().unwrap_or(0);
            self.weights[k] = if self.dead[k] { INF } else { self.profiles[k].peak().max(top) };
        }
        kth_largest(&self.weights, c.budget)
    }

    pub fn dead_count(&self) -> usize {
        self.dead_count
    }
}

/// Compulsory part `[lst, lo + d)` of job `j` in scenario `k` (possibly empty).
fn compulsory(c: &Compiled, k: usize, j: usize, d: Time) -> (Time, Time) {
    let latest = c.lst[k][j];
    let earliest = c.lo[j].max(c.est[k][j]);
    if latest < earliest {
        return (0, 0);
    }
    (latest, earliest + d)
}

/// Greedy construction: each job in order takes the value with the lowest
/// bound (ties: fewest dead scenarios, then earliest).
pub(crate) fn greedy(c: &Compiled) -> Option<Vec<Time>> {
    let mut dive = Dive::new(c);
    for &j in &c.order {
        let (from, to) = dive.hard_range(j);
        if from > to {
            return None;
        }
        let mut best: Option<(Cores, usize, Time)> = None;
        for s in from..=to {
            let a = dive.apply(j, s);
            let key = (dive.bound(), dive.dead_count(), s);
            dive.undo(a);
            if best.is_none_or(|b| key < b) {
                best = Some(key);
            }
        }
        let (_, _, s) = best?;
        let _ = dive.apply(j, s);
    }
    Some(dive.starts().to_vec())
}

pub(crate) enum Outcome {
    Exhausted,
    Stopped,
}

/// Exhaustive DFS. `best` holds the incumbent objective and starts and is
/// updated in place; `on_improve` fires with each new incumbent.
pub(crate) fn branch_and_bound(
    c: &Compiled,
    best: &mut Option<(Cores, Vec<Time>)>,
    limits: &mut Limits,
    on_improve: &mut dyn FnMut(Cores),
) -> Outcome {
    let mut dive = Dive::new(c);
    let mut bound = best.as_ref().map_or(INF, |b| b.0);
    if recurse(c, &mut dive, &mut bound, best, limits, on_improve) {
        Outcome::Exhausted
    } else {
        Outcome::Stopped
    }
}

/// Returns false when the limits stopped the search.
fn recurse(
    c: &Compiled,
    dive: &mut Dive<'_>,
    bound: &mut Cores,
    best: &mut Option<(Cores, Vec<Time>)>,
    limits: &mut Limits,
    on_improve: &mut dyn FnMut(Cores),
) -> bool {
    let depth = dive.depth();
    if depth == c.n {
        let value = dive.bound();
        if value < *bound {
            *bound = value;
            *best = Some((value, dive.starts().to_vec()));
            on_improve(value);
        }
        return true;
    }
    let j = c.order[depth];
    let (from, to) = dive.hard_range(j);
    for s in from..=to {
        if !limits.tick() {
            return false;
        }
        let a = dive.apply(j, s);
        let lb = dive.bound();
        let keep_going = if lb < *bound { recurse(c, dive, bound, best, limits, on_improve) } else { true };
        dive.undo(a);
        if !keep_going {
            return false;
        }
        if *bound == 0 {
            // nothing beats a zero peak
            return true;
        }
    }
    true
}
