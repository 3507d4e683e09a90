//! Pair sampling of K joint (duration, cpu) scenarios from job histories.

use std::collections::BTreeMap;

use rand::Rng;

use crate::domain::{HistoryRecord, Problem};
use crate::estimators::{estimate, EstimateError, EstimatorKind};
use crate::seeding;

const STREAM: &str = "scenarios";

/// K draws per job. Scenario `k` of the problem is the `k`-th draw of every job.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioSet {
    pub k: usize,
    pub draws: BTreeMap<String, Vec<HistoryRecord>>,
    pub seed: u64,
}

impl ScenarioSet {
    pub fn draw(&self, job: &str, scenario: usize) -> Option<HistoryRecord> {
        self.draws.get(job).and_then(|d| d.get(scenario)).copied()
    }

    /// One scenario holding the given record per job; handy for collapsing
    /// a deterministic model into the scenario form.
    pub fn single(records: BTreeMap<String, HistoryRecord>) -> Self {
        Self { k: 1, draws: records.into_iter().map(|(id, r)| (id, vec![r])).collect(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("sample count must be at least 1")]
    ZeroSamples,
    #[error("empty history: {0}")]
    EmptyHistory(String),
}

/// Draws `k` historical runs per job, uniformly with replacement, keeping
/// each run's duration and cpu together.
pub fn sample_scenarios(p: &Problem, k: usize, seed: u64) -> Result<ScenarioSet, SampleError> {
    if k == 0 {
        return Err(SampleError::ZeroSamples);
    }
    let mut draws = BTreeMap::new();
    for job in &p.jobs {
        if job.history.is_empty() {
            return Err(SampleError::EmptyHistory(job.id.clone()));
        }
        let mut rng = seeding::stream(STREAM, seed, &job.id);
        let picks =
            (0..k).map(|_| job.history[rng.gen_range(0..job.history.len())]).collect::<Vec<_>>();
        draws.insert(job.id.clone(), picks);
    }
    Ok(ScenarioSet { k, draws, seed })
}

/// Samples durations as [`sample_scenarios`] does but pins every draw's cpu
/// to the job's `cpu_kind` estimate.
pub fn sample_duration_only(
    p: &Problem,
    k: usize,
    seed: u64,
    cpu_kind: EstimatorKind,
) -> Result<ScenarioSet, SampleError> {
    let mut set = sample_scenarios(p, k, seed)?;
    for job in &p.jobs {
        let cpus: Vec<i64> = job.history.iter().map(|h| h.cpu).collect();
        let cpu = estimate(&cpus, cpu_kind)
            .map_err(|EstimateError::EmptyHistory| SampleError::EmptyHistory(job.id.clone()))?;
        for d in set.draws.get_mut(&job.id).unwrap() {
            d.cpu = cpu;
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::JobSpec;

    fn problem(histories: &[&[(i64, i64)]]) -> Problem {
        let jobs = histories
            .iter()
            .enumerate()
            .map(|(i, h)| JobSpec {
                id: format!("j{i}"),
                q: 0,
                f: 10,
                u: 100,
                deps: vec![],
                history: h.iter().map(|&r| r.into()).collect(),
            })
            .collect();
        Problem::new(100, jobs)
    }

    #[test]
    fn singleton_history() {
        let s = sample_scenarios(&problem(&[&[(7, 3)]]), 3, 1).unwrap();
        assert_eq!(s.draws["j0"], vec![HistoryRecord::new(7, 3); 3]);
    }

    #[test]
    fn pairs_preserved() {
        let s = sample_scenarios(&problem(&[&[(10, 5), (20, 9)]]), 5, 42).unwrap();
        for d in &s.draws["j0"] {
            assert!(*d == HistoryRecord::new(10, 5) || *d == HistoryRecord::new(20, 9));
        }
    }

    #[test]
    fn uniform_frequency() {
        let s = sample_scenarios(&problem(&[&[(10, 5), (20, 9)]]), 10_000, 2024).unwrap();
        let hits = s.draws["j0"].iter().filter(|d| d.duration == 10).count();
        let freq = hits as f64 / 10_000.0;
        assert!((0.49..=0.51).contains(&freq), "{freq}");
    }

    #[test]
    fn chi_square_uniform_indices() {
        // six distinct records so each draw identifies its index
        let hist: Vec<(i64, i64)> = (1..=6).map(|i| (i, i)).collect();
        let k = 12_000;
        let s = sample_scenarios(&problem(&[&hist]), k, 77).unwrap();
        let mut counts = [0f64; 6];
        for d in &s.draws["j0"] {
            counts[(d.duration - 1) as usize] += 1.0;
        }
        let expected = k as f64 / 6.0;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        // 5 degrees of freedom, 99.9th percentile
        assert!(chi2 < 20.52, "chi2 = {chi2}");
    }

    #[test]
    fn deterministic_and_stable_under_added_jobs() {
        let p1 = problem(&[&[(1, 1), (2, 2), (3, 3)]]);
        let p2 = problem(&[&[(1, 1), (2, 2), (3, 3)], &[(4, 4), (5, 5)]]);
        let a = sample_scenarios(&p1, 20, 9).unwrap();
        let b = sample_scenarios(&p1, 20, 9).unwrap();
        let c = sample_scenarios(&p2, 20, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.draws["j0"], c.draws["j0"]);
    }

    #[test]
    fn duration_only_constant_cpu() {
        let s = sample_duration_only(&problem(&[&[(10, 5), (20, 9)]]), 8, 3, EstimatorKind::P100)
            .unwrap();
        assert!(s.draws["j0"].iter().all(|d| d.cpu == 9));
        let s = sample_duration_only(
            &problem(&[&[(10, 5), (12, 7), (30, 9)]]),
            6,
            3,
            EstimatorKind::P50,
        )
        .unwrap();
        assert!(s.draws["j0"].iter().all(|d| d.cpu == 7));
        let one = sample_duration_only(&problem(&[&[(10, 5), (20, 9)]]), 1, 3, EstimatorKind::P50)
            .unwrap();
        assert_eq!(one.draws["j0"].len(), 1);
    }

    #[test]
    fn errors() {
        assert_eq!(sample_scenarios(&problem(&[&[(1, 1)]]), 0, 0), Err(SampleError::ZeroSamples));
        assert_eq!(
            sample_scenarios(&problem(&[&[]]), 2, 0),
            Err(SampleError::EmptyHistory("j0".into()))
        );
    }
}
