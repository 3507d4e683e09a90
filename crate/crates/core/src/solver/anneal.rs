//! Multi-restart simulated annealing over (starts, violated set).
//!
//! Moves shift one start or swap a scenario in and out of the violated set.
//! Every broken constraint of a scenario outside the violated set (and every
//! broken hard constraint) costs `M`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::seeding;
use crate::solver::compiled::Compiled;
use crate::solver::profile::Profile;
use crate::solver::Limits;
use crate::{Cores, Time};

#[derive(Debug, Clone, Copy)]
enum Constraint {
    Deadline { job: usize, scenario: usize, latest: Time, hard: bool },
    Precedence { parent: usize, child: usize, scenario: usize, duration: Time, hard: bool },
}

impl Constraint {
    fn holds(&self, starts: &[Time]) -> bool {
        match *self {
            Constraint::Deadline { job, latest, .. } => starts[job] <= latest,
            Constraint::Precedence { parent, child, duration, .. } => {
                starts[parent] + duration <= starts[child]
            }
        }
    }

    fn scope(&self) -> (usize, bool) {
        match *self {
            Constraint::Deadline { scenario, hard, .. }
            | Constraint::Precedence { scenario, hard, .. } => (scenario, hard),
        }
    }
}

struct State<'a> {
    c: &'a Compiled,
    starts: Vec<Time>,
    profiles: Vec<Profile>,
    /// (duration, demand) per scenario and job.
    tasks: Vec<Vec<Option<(Time, Cores)>>>,
    constraints: Vec<Constraint>,
    touching: Vec<Vec<usize>>,
    broken: Vec<bool>,
    soft_broken: Vec<i64>,
    hard_broken: i64,
    exempt: Vec<bool>,
}

/// Penalized cost: (penalty-weighted objective, tie-break secondary).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Cost {
    value: f64,
    objective: Cores,
    broken: i64,
}

impl<'a> State<'a> {
    fn new(c: &'a Compiled, starts: Vec<Time>, budget: usize) -> Self {
        let tasks: Vec<Vec<Option<(Time, Cores)>>> = match &c.linear {
            Some(lin) => vec![lin.iter().map(|&t| Some(t)).collect()],
            None => c.tasks.clone(),
        };
        let mut constraints = Vec::new();
        for j in 0..c.n {
            for &(scenario, latest, hard) in &c.deadlines[j] {
                constraints.push(Constraint::Deadline { job: j, scenario, latest, hard });
            }
            for e in &c.parents[j] {
                constraints.push(Constraint::Precedence {
                    parent: e.other,
                    child: j,
                    scenario: e.scenario,
                    duration: e.duration,
                    hard: e.hard,
                });
            }
        }
        let mut touching = vec![Vec::new(); c.n];
        for (i, con) in constraints.iter().enumerate() {
            match *con {
                Constraint::Deadline { job, .. } => touching[job].push(i),
                Constraint::Precedence { parent, child, .. } => {
                    touching[parent].push(i);
                    touching[child].push(i);
                }
            }
        }
        let mut profiles: Vec<Profile> = (0..c.k).map(|_| Profile::new(c.span)).collect();
        for (k, prof) in profiles.iter_mut().enumerate() {
            for (j, t) in tasks[k].iter().enumerate() {
                if let Some((d, r)) = *t {
                    prof.add(starts[j], starts[j] + d, r);
                }
            }
        }
        let mut state = Self {
            c,
            starts,
            profiles,
            tasks,
            broken: vec![false; constraints.len()],
            constraints,
            touching,
            soft_broken: vec![0; c.k],
            hard_broken: 0,
            exempt: vec![false; c.k],
        };
        for i in 0..state.constraints.len() {
            if !state.constraints[i].holds(&state.starts) {
                state.mark(i, true);
            }
        }
        // exempt the worst scenarios first
        let mut order: Vec<usize> = (0..c.k).collect();
        order.sort_by_key(|&k| (std::cmp::Reverse((state.soft_broken[k], state.profiles[k].peak())), k));
        for &k in order.iter().take(budget.min(c.k)) {
            state.exempt[k] = true;
        }
        state
    }

    fn mark(&mut self, i: usize, broken: bool) {
        self.broken[i] = broken;
        let delta = if broken { 1 } else { -1 };
        match self.constraints[i].scope() {
            (_, true) => self.hard_broken += delta,
            (k, false) => self.soft_broken[k] += delta,
        }
    }

    fn shift(&mut self, j: usize, to: Time) {
        let from = self.starts[j];
        for k in 0..self.profiles.len() {
            if let Some((d, r)) = self.tasks[k][j] {
                self.profiles[k].add(from, from + d, -r);
                self.profiles[k].add(to, to + d, r);
            }
        }
        self.starts[j] = to;
        for idx in 0..self.touching[j].len() {
            let i = self.touching[j][idx];
            let now = !self.constraints[i].holds(&self.starts);
            if now != self.broken[i] {
                self.mark(i, now);
            }
        }
    }

    /// Peak of the kept scenarios, plus two terms below one core that
    /// reward lower peaks elsewhere and narrower peak plateaus, so moves on
    /// a flat objective still have a gradient.
    fn cost(&self) -> Cost {
        let mut objective = 0;
        let mut top_width = 0u64;
        let mut total = 0.0;
        let mut counted = 0;
        let mut broken = self.hard_broken;
        for k in 0..self.c.k {
            if self.exempt[k] {
                continue;
            }
            let peak = self.profiles[k].peak();
            let width = u64::from(self.profiles[k].peak_width());
            if peak > objective || counted == 0 {
                objective = peak;
                top_width = width;
            } else if peak == objective {
                top_width += width;
            }
            total += peak as f64 + plateau(width);
            counted += 1;
            broken += self.soft_broken[k];
        }
        let mean = if counted > 0 { total / counted as f64 } else { 0.0 };
        Cost {
            value: (broken * self.c.big_m + objective) as f64 + 0.1 * mean + 0.5 * plateau(top_width),
            objective,
            broken,
        }
    }
}

fn plateau(width: u64) -> f64 {
    width as f64 / (width as f64 + 100.0)
}

pub(crate) struct AnnealResult {
    pub best: Option<(Cores, Vec<Time>)>,
}

/// Runs `restarts` annealing passes of `iterations` moves each. The first
/// pass starts from `initial`, later ones from a perturbed incumbent. Stops
/// early once the incumbent reaches `floor`, a known lower bound.
pub(crate) fn anneal(
    c: &Compiled,
    initial: Vec<Time>,
    seed: u64,
    iterations: u64,
    restarts: u32,
    limits: &mut Limits,
    incumbent: Option<(Cores, Vec<Time>)>,
    floor: Cores,
    on_improve: &mut dyn FnMut(Cores),
) -> AnnealResult {
    let mut best = incumbent;
    let budget = c.budget.min(c.k);
    let mean_demand = {
        let all: Vec<Cores> = match &c.linear {
            Some(l) => l.iter().map(|t| t.1).collect(),
            None => c.tasks.iter().flatten().flatten().map(|t| t.1).collect(),
        };
        if all.is_empty() { 1.0 } else { all.iter().sum::<Cores>() as f64 / all.len() as f64 }
    };
    let t0 = mean_demand.max(1.0);
    let t_end = 0.05_f64;

    'restarts: for r in 0..restarts.max(1) {
        let mut rng: ChaCha8Rng = seeding::stream("anneal", seed, &r.to_string());
        let start = if r == 0 {
            initial.clone()
        } else {
            let mut s = best.as_ref().map_or_else(|| initial.clone(), |b| b.1.clone());
            for j in 0..c.n {
                if rng.gen_bool(0.15) {
                    s[j] = rng.gen_range(c.lo[j]..=c.hi[j]);
                }
            }
            s
        };
        let mut state = State::new(c, start, budget);
        let mut current = state.cost();
        let mut consider = |state: &State<'_>, cost: Cost, best: &mut Option<(Cores, Vec<Time>)>| {
            if cost.broken == 0 && best.as_ref().is_none_or(|b| cost.objective < b.0) {
                *best = Some((cost.objective, state.starts.clone()));
                on_improve(cost.objective);
            }
        };
        consider(&state, current, &mut best);
        let done = |best: &Option<(Cores, Vec<Time>)>| best.as_ref().is_some_and(|b| b.0 <= floor);
        if done(&best) {
            break;
        }
        let swaps = budget > 0 && budget < c.k;
        for it in 0..iterations {
            if !limits.tick() {
                break 'restarts;
            }
            let temp = t0 * (t_end / t0).powf(it as f64 / iterations as f64);
            if swaps && rng.gen_bool(0.15) {
                let ins: Vec<usize> = (0..c.k).filter(|&k| state.exempt[k]).collect();
                let outs: Vec<usize> = (0..c.k).filter(|&k| !state.exempt[k]).collect();
                let a = ins[rng.gen_range(0..ins.len())];
                let b = outs[rng.gen_range(0..outs.len())];
                state.exempt[a] = false;
                state.exempt[b] = true;
                let next = state.cost();
                if accept(current.value, next.value, temp, &mut rng) {
                    current = next;
                    consider(&state, current, &mut best);
                    if done(&best) {
                        break 'restarts;
                    }
                } else {
                    state.exempt[a] = true;
                    state.exempt[b] = false;
                }
                continue;
            }
            let j = rng.gen_range(0..c.n);
            let (lo, hi) = (c.lo[j], c.hi[j]);
            if lo >= hi {
                continue;
            }
            let old = state.starts[j];
            let to = if rng.gen_bool(0.5) {
                rng.gen_range(lo..=hi)
            } else {
                let w = ((hi - lo) / 4 + 1).min(30);
                (old + rng.gen_range(-w..=w)).clamp(lo, hi)
            };
            if to == old {
                continue;
            }
            state.shift(j, to);
            let next = state.cost();
            if accept(current.value, next.value, temp, &mut rng) {
                current = next;
                consider(&state, current, &mut best);
                if done(&best) {
                    break 'restarts;
                }
            } else {
                state.shift(j, old);
            }
        }
    }
    AnnealResult { best }
}

fn accept(current: f64, next: f64, temp: f64, rng: &mut ChaCha8Rng) -> bool {
    next <= current || rng.gen::<f64>() < ((current - next) / temp).exp()
}
