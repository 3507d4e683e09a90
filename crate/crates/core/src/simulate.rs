//! Monte-Carlo execution of a schedule against fresh history draws.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{peak_usage, topological_indices, HistoryRecord, Problem, Realization, Schedule};
use crate::{seeding, Cores, Time};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("schedule has no start for job {0}")]
    MissingStart(String),
    #[error("job {0} has an empty history")]
    EmptyHistory(String),
    #[error("dependency cycle")]
    Cycle,
    #[error("estimated peak must be at least 1")]
    ZeroEstimate,
    #[error("baseline peak must be at least 1")]
    ZeroBaseline,
    #[error("at least one run is required")]
    NoRuns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Fraction by which the observed peak is below the baseline's.
    pub peak_reduction: f64,
    pub under_estimation_error: f64,
    pub over_estimation_error: f64,
    /// Seconds past the deadline, per job.
    pub deadline_violations: BTreeMap<String, Time>,
}

impl Metrics {
    pub fn max_deadline_violation(&self) -> Time {
        self.deadline_violations.values().copied().max().unwrap_or(0)
    }

    /// Mean over all jobs, on-time jobs counting as zero.
    pub fn mean_deadline_violation(&self) -> f64 {
        if self.deadline_violations.is_empty() {
            return 0.0;
        }
        self.deadline_violations.values().sum::<Time>() as f64 / self.deadline_violations.len() as f64
    }
}

pub fn compute_metrics(
    p: &Problem,
    r: &Realization,
    p_est: Cores,
    baseline_peak: Cores,
) -> Result<Metrics, SimError> {
    if p_est < 1 {
        return Err(SimError::ZeroEstimate);
    }
    if baseline_peak < 1 {
        return Err(SimError::ZeroBaseline);
    }
    let real = r.observed_peak as f64;
    let est = p_est as f64;
    let mut deadline_violations = BTreeMap::new();
    for job in &p.jobs {
        let end = *r.actual_end.get(&job.id).ok_or_else(|| SimError::MissingStart(job.id.clone()))?;
        deadline_violations.insert(job.id.clone(), (end - job.u).max(0));
    }
    Ok(Metrics {
        peak_reduction: (baseline_peak - r.observed_peak) as f64 / baseline_peak as f64,
        under_estimation_error: ((real - est) / est).max(0.0),
        over_estimation_error: ((est - real) / est).max(0.0),
        deadline_violations,
    })
}

/// One record per job, uniform over its history.
pub fn draw_inputs(p: &Problem, seed: u64) -> Result<BTreeMap<String, HistoryRecord>, SimError> {
    p.jobs
        .iter()
        .map(|job| {
            if job.history.is_empty() {
                return Err(SimError::EmptyHistory(job.id.clone()));
            }
            let mut rng = seeding::stream("execution", seed, &job.id);
            Ok((job.id.clone(), job.history[rng.gen_range(0..job.history.len())]))
        })
        .collect()
}

/// Runs `s` with the given draws. A job starts at its scheduled time or
/// when its last parent finishes, whichever is later.
pub fn execute_with_draws(
    p: &Problem,
    s: &Schedule,
    draws: &BTreeMap<String, HistoryRecord>,
) -> Result<Realization, SimError> {
    let order = topological_indices(p).map_err(|_| SimError::Cycle)?;
    let parents = p.parent_indices();
    let n = p.len();
    let mut start = vec![0; n];
    let mut end = vec![0; n];
    for &j in &order {
        let job = &p.jobs[j];
        let planned = *s.starts.get(&job.id).ok_or_else(|| SimError::MissingStart(job.id.clone()))?;
        let draw = draws.get(&job.id).ok_or_else(|| SimError::EmptyHistory(job.id.clone()))?;
        start[j] = parents[j].iter().map(|&q| end[q]).fold(planned, Time::max);
        end[j] = start[j] + draw.duration;
    }
    let observed_peak = peak_usage(p.jobs.iter().enumerate().map(|(j, job)| (start[j], end[j] - start[j], draws[&job.id].cpu)));
    Ok(Realization {
        draws: draws.clone(),
        actual_start: p.jobs.iter().enumerate().map(|(j, job)| (job.id.clone(), start[j])).collect(),
        actual_end: p.jobs.iter().enumerate().map(|(j, job)| (job.id.clone(), end[j])).collect(),
        observed_peak,
    })
}

pub fn execute(p: &Problem, s: &Schedule, seed: u64) -> Result<Realization, SimError> {
    execute_with_draws(p, s, &draw_inputs(p, seed)?)
}

/// Per-run metrics as they appear in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub observed_peak: Cores,
    pub baseline_peak: Cores,
    pub under_err: f64,
    pub over_err: f64,
    pub max_deadline_violation_s: Time,
    pub mean_deadline_violation_s: f64,
    pub peak_reduction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub mean: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        if values.is_empty() {
            return Summary { min: 0.0, max: 0.0, median: 0.0, mean: 0.0 };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        Summary { min: v[0], max: v[n - 1], median, mean: v.iter().sum::<f64>() / n as f64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub observed_peak: Summary,
    pub under_err: Summary,
    pub over_err: Summary,
    pub max_deadline_violation_s: Summary,
    pub mean_deadline_violation_s: Summary,
    pub peak_reduction: Summary,
}

impl Aggregates {
    pub fn of(runs: &[RunMetrics]) -> Aggregates {
        let col = |f: &dyn Fn(&RunMetrics) -> f64| Summary::of(&runs.iter().map(f).collect::<Vec<_>>());
        Aggregates {
            observed_peak: col(&|r| r.observed_peak as f64),
            under_err: col(&|r| r.under_err),
            over_err: col(&|r| r.over_err),
            max_deadline_violation_s: col(&|r| r.max_deadline_violation_s as f64),
            mean_deadline_violation_s: col(&|r| r.mean_deadline_violation_s),
            peak_reduction: col(&|r| r.peak_reduction),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub per_run: Vec<RunMetrics>,
    pub aggregates: Aggregates,
}

/// Seed of Monte-Carlo run `i`.
pub fn run_seed(seed: u64, i: usize) -> u64 {
    seeding::derive("run", seed, i as u64)
}

/// Executes `s` and `baseline` on the same draws in each of `runs` runs.
/// `s.peak_estimate` is the capacity the errors are measured against.
pub fn evaluate(
    p: &Problem,
    s: &Schedule,
    runs: usize,
    seed: u64,
    baseline: &Schedule,
) -> Result<Evaluation, SimError> {
    if runs == 0 {
        return Err(SimError::NoRuns);
    }
    let per_run = (0..runs)
        .into_par_iter()
        .map(|i| {
            let draws = draw_inputs(p, run_seed(seed, i))?;
            let base = execute_with_draws(p, baseline, &draws)?;
            let real = execute_with_draws(p, s, &draws)?;
            let m = compute_metrics(p, &real, s.peak_estimate, base.observed_peak)?;
            Ok(RunMetrics {
                observed_peak: real.observed_peak,
                baseline_peak: base.observed_peak,
                under_err: m.under_estimation_error,
                over_err: m.over_estimation_error,
                max_deadline_violation_s: m.max_deadline_violation(),
                mean_deadline_violation_s: m.mean_deadline_violation(),
                peak_reduction: m.peak_reduction,
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    let aggregates = Aggregates::of(&per_run);
    Ok(Evaluation { per_run, aggregates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::JobSpec;

    fn job(id: &str, q: Time, f: Time, u: Time, deps: &[&str], history: &[(Time, Cores)]) -> JobSpec {
        JobSpec {
            id: id.into(),
            q,
            f,
            u,
            deps: deps.iter().map(|d| d.to_string()).collect(),
            history: history.iter().map(|&h| h.into()).collect(),
        }
    }

    fn realization(peak: Cores, ends: &[(&str, Time)]) -> Realization {
        Realization {
            draws: BTreeMap::new(),
            actual_start: BTreeMap::new(),
            actual_end: ends.iter().map(|&(j, e)| (j.to_string(), e)).collect(),
            observed_peak: peak,
        }
    }

    #[test]
    fn worked_metric_examples() {
        let p = Problem::new(100_000, vec![job("a", 0, 0, 61_200, &[], &[(1, 1)])]);
        let under = compute_metrics(&p, &realization(10, &[("a", 0)]), 6, 10).unwrap();
        assert_eq!(under.under_estimation_error, 4.0 / 6.0);
        assert_eq!(under.over_estimation_error, 0.0);
        let over = compute_metrics(&p, &realization(6, &[("a", 0)]), 10, 10).unwrap();
        assert_eq!(over.over_estimation_error, 4.0 / 10.0);
        assert_eq!(over.under_estimation_error, 0.0);
        // deadline 17:00, finished 17:15
        let late = compute_metrics(&p, &realization(6, &[("a", 62_100)]), 10, 10).unwrap();
        assert_eq!(late.deadline_violations["a"], 900);
        assert_eq!(compute_metrics(&p, &realization(6, &[("a", 0)]), 0, 10), Err(SimError::ZeroEstimate));
    }

    #[test]
    fn singleton_history_starts_on_time() {
        let p = Problem::new(100, vec![job("a", 3, 5, 50, &[], &[(4, 2)]), job("b", 0, 5, 50, &[], &[(2, 1)])]);
        let s = Schedule { starts: [("a".into(), 5), ("b".into(), 1)].into(), peak_estimate: 2 };
        let r = execute(&p, &s, 9).unwrap();
        assert_eq!(r.actual_start["a"], 5);
        assert_eq!(r.actual_start["b"], 1);
        assert_eq!(r.observed_peak, 2);
    }

    #[test]
    fn ripple_delay() {
        let p = Problem::new(100, vec![job("a", 0, 0, 50, &[], &[(10, 1)]), job("b", 4, 0, 50, &["a"], &[(3, 1)])]);
        let s = Schedule { starts: [("a".into(), 0), ("b".into(), 4)].into(), peak_estimate: 1 };
        let r = execute(&p, &s, 0).unwrap();
        assert_eq!(r.actual_start["b"], 10);
        assert_eq!(r.actual_end["b"], 13);
        assert_eq!(r.observed_peak, 1);
    }

    #[test]
    fn missing_start_is_reported() {
        let p = Problem::new(100, vec![job("a", 0, 0, 50, &[], &[(10, 1)])]);
        let s = Schedule { starts: BTreeMap::new(), peak_estimate: 1 };
        assert_eq!(execute(&p, &s, 0), Err(SimError::MissingStart("a".into())));
    }

    #[test]
    fn identical_arms_have_no_reduction() {
        let hist: Vec<(Time, Cores)> = (1..=6).map(|i| (i * 2, i)).collect();
        let p = Problem::new(
            200,
            vec![job("a", 0, 10, 100, &[], &hist), job("b", 5, 10, 100, &[], &hist), job("c", 8, 4, 100, &["a"], &hist)],
        );
        let s = Schedule::manual(&p, 9);
        let e = evaluate(&p, &s, 40, 3, &s).unwrap();
        assert!(e.per_run.iter().all(|r| r.peak_reduction == 0.0));
        assert!(e.per_run.iter().all(|r| r.under_err * r.over_err == 0.0));
        let distinct: std::collections::BTreeSet<Cores> = e.per_run.iter().map(|r| r.observed_peak).collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[3.0, 1.0, 2.0, 10.0]);
        assert_eq!((s.min, s.max, s.median, s.mean), (1.0, 10.0, 2.5, 4.0));
        assert_eq!(Summary::of(&[7.0]).median, 7.0);
    }
}
