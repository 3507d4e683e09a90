//! Exhaustive enumeration over every start assignment and every violated
//! set within the budget. Reads the model's constraint lists directly and
//! shares no code with the search.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{LinearizedVars, ScheduleModel};
use crate::solver::{Solution, SolveStatus};
use crate::{Cores, Time};

/// Largest `assignments x violated subsets` the oracle will enumerate.
pub const ORACLE_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("instance too large for oracle ({0} combinations)")]
    TooLarge(u128),
    #[error("malformed model: {0}")]
    Malformed(String),
}

fn binomial_sum(k: usize, upto: usize) -> u128 {
    let mut total = 0u128;
    let mut c = 1u128;
    for i in 0..=upto.min(k) {
        total += c;
        c = c * (k - i) as u128 / (i + 1) as u128;
    }
    total
}

/// Violated subsets of `0..k` with at most `budget` members, ordered by
/// size then lexicographically.
fn subsets(k: usize, budget: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, k: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for s in start..k {
            cur.push(s);
            rec(s + 1, k, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for size in 0..=budget.min(k) {
        rec(0, k, size, &mut Vec::new(), &mut out);
    }
    out
}

/// Peak of the start-event encoding by enumerating both deltas of every pair.
fn linearized_peak(lin: &LinearizedVars, starts: &[Time], big_m: Cores) -> Option<Cores> {
    let mut p = 0;
    for tj in &lin.tasks {
        let mut lhs = tj.demand;
        for pair in lin.pairs.iter().filter(|pair| pair.j == tj.job) {
            let ti = lin.tasks.iter().find(|t| t.job == pair.i)?;
            let (s_j, s_i) = (starts[pair.j], starts[pair.i]);
            let mut min_res: Option<Cores> = None;
            for d1 in 0..=1i64 {
                for d2 in 0..=1i64 {
                    if d1 * big_m < s_j - s_i + 1 || d2 * big_m < s_i + ti.duration - s_j {
                        continue;
                    }
                    let lower = (ti.demand - (2 - d1 - d2) * big_m).max(0);
                    let upper = (d1 * ti.demand).min(d2 * ti.demand).min(pair.res_upper);
                    if lower <= upper {
                        min_res = Some(min_res.map_or(lower, |m: Cores| m.min(lower)));
                    }
                }
            }
            lhs += min_res?;
        }
        p = p.max(lhs);
    }
    Some(p)
}

/// True optimum by enumeration; ties go to the lexicographically smallest
/// starts, then the smallest violated set.
pub fn brute_force(m: &ScheduleModel) -> Result<Solution, OracleError> {
    m.check().map_err(|e| OracleError::Malformed(e.to_string()))?;
    let n = m.start_vars.len();
    let k = m.scenarios;
    let mut size: u128 = binomial_sum(k, m.tolerance_budget);
    for v in &m.start_vars {
        size = size.saturating_mul(u128::from(v.domain_size()));
    }
    if size > ORACLE_LIMIT {
        return Err(OracleError::TooLarge(size));
    }
    let subsets = subsets(k, m.tolerance_budget);
    let empty = m.start_vars.iter().any(|v| v.lo > v.hi);

    let mut best: Option<(Cores, Vec<Time>, Vec<Cores>, Vec<usize>)> = None;
    let mut starts: Vec<Time> = m.start_vars.iter().map(|v| v.lo).collect();
    let mut scenario_ok = vec![true; k];
    let mut peaks = vec![0; k];
    'enumerate: while !empty {
        let hard_ok = m.deadline_constraints.iter().all(|c| c.relaxable || c.holds(&starts))
            && m.precedence_constraints.iter().all(|c| c.relaxable || c.holds(&starts));
        if hard_ok {
            scenario_ok.iter_mut().for_each(|ok| *ok = true);
            for c in m.deadline_constraints.iter().filter(|c| c.relaxable) {
                if !c.holds(&starts) {
                    scenario_ok[c.scenario] = false;
                }
            }
            for c in m.precedence_constraints.iter().filter(|c| c.relaxable) {
                if !c.holds(&starts) {
                    scenario_ok[c.scenario] = false;
                }
            }
            for (s, peak) in peaks.iter_mut().enumerate() {
                *peak = match &m.linearized {
                    Some(lin) => linearized_peak(lin, &starts, m.big_m).unwrap_or(Cores::MAX),
                    None => crate::domain::peak_usage(
                        m.cumulative_groups
                            .iter()
                            .filter(|g| g.scenario == s)
                            .flat_map(|g| g.tasks.iter())
                            .map(|t| (starts[t.job], t.duration, t.demand)),
                    ),
                };
            }
            for subset in &subsets {
                let exempt = |s: usize| subset.contains(&s);
                if (0..k).any(|s| !exempt(s) && !scenario_ok[s]) {
                    continue;
                }
                let objective = (0..k).filter(|&s| !exempt(s)).map(|s| peaks[s]).max().unwrap_or(0);
                if best.as_ref().is_none_or(|b| objective < b.0) {
                    best = Some((objective, starts.clone(), peaks.clone(), subset.clone()));
                }
            }
        }
        // odometer, last job fastest: lexicographic order
        for j in (0..n).rev() {
            if starts[j] < m.start_vars[j].hi {
                starts[j] += 1;
                continue 'enumerate;
            }
            starts[j] = m.start_vars[j].lo;
        }
        break;
    }

    Ok(match best {
        Some((objective, starts, peaks, violated)) => Solution {
            starts: m.start_vars.iter().map(|v| v.job.clone()).zip(starts).collect(),
            scenario_peaks: peaks,
            violated: violated.into_iter().collect(),
            objective,
            status: SolveStatus::Optimal,
            core: None,
            work: 0,
        },
        None => Solution {
            starts: BTreeMap::new(),
            scenario_peaks: Vec::new(),
            violated: BTreeSet::new(),
            objective: 0,
            status: SolveStatus::Infeasible,
            core: None,
            work: 0,
        },
    })
}
