//! Synthetic COS instances with uniform durations and CPU usage.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{HistoryRecord, JobSpec, Problem};
use crate::{seeding, Cores, Time};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n: usize,
    pub duration_range: (Time, Time),
    pub cpu_range: (Cores, Cores),
    pub history_len: usize,
    pub flexibility_choices: Vec<Time>,
    pub horizon_range: (Time, Time),
    pub max_deps: usize,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            duration_range: (10, 30),
            cpu_range: (5, 10),
            history_len: 50,
            flexibility_choices: vec![20, 30, 80, 120],
            horizon_range: (500, 3000),
            max_deps: 3,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error("horizon {horizon} cannot fit a job needing {needed}")]
    HorizonTooSmall { horizon: Time, needed: Time },
}

/// Generates a problem. Each job's parents are earlier jobs whose deadline
/// is no later than the job's own latest start, so starting every job as
/// late as allowed always satisfies every precedence.
pub fn generate(cfg: &GenConfig) -> Result<Problem, GenError> {
    if cfg.n == 0 {
        return Err(GenError::InvalidConfig("n must be at least 1"));
    }
    if cfg.duration_range.0 < 1 || cfg.duration_range.0 > cfg.duration_range.1 {
        return Err(GenError::InvalidConfig("duration range"));
    }
    if cfg.cpu_range.0 < 0 || cfg.cpu_range.0 > cfg.cpu_range.1 {
        return Err(GenError::InvalidConfig("cpu range"));
    }
    if cfg.history_len == 0 {
        return Err(GenError::InvalidConfig("history length must be at least 1"));
    }
    let Some(&max_f) = cfg.flexibility_choices.iter().max() else {
        return Err(GenError::InvalidConfig("no flexibility choices"));
    };
    if cfg.flexibility_choices.iter().any(|&f| f < 0) || cfg.horizon_range.0 > cfg.horizon_range.1 {
        return Err(GenError::InvalidConfig("flexibility or horizon range"));
    }

    let mut rng = seeding::stream("synthgen", cfg.seed, "");
    let horizon = rng.gen_range(cfg.horizon_range.0..=cfg.horizon_range.1);
    let needed = cfg.duration_range.1 + max_f;
    if horizon < needed {
        return Err(GenError::HorizonTooSmall { horizon, needed });
    }
    let width = (cfg.n - 1).to_string().len();
    let mut jobs: Vec<JobSpec> = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let history: Vec<HistoryRecord> = (0..cfg.history_len)
            .map(|_| {
                HistoryRecord::new(
                    rng.gen_range(cfg.duration_range.0..=cfg.duration_range.1),
                    rng.gen_range(cfg.cpu_range.0..=cfg.cpu_range.1),
                )
            })
            .collect();
        let max_d = history.iter().map(|h| h.duration).max().unwrap_or(0);
        let q = rng.gen_range(0..=horizon - needed);
        let f = *cfg.flexibility_choices.choose(&mut rng).expect("nonempty");
        let candidates: Vec<&JobSpec> = jobs.iter().filter(|p| p.u <= q + f).collect();
        let count = rng.gen_range(0..=cfg.max_deps.min(candidates.len()));
        let mut deps: Vec<String> =
            candidates.choose_multiple(&mut rng, count).map(|p| p.id.clone()).collect();
        deps.sort();
        jobs.push(JobSpec { id: format!("j{i:0width$}"), q, f, u: q + f + max_d, deps, history });
    }
    Ok(Problem::new(horizon, jobs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::validate_problem;

    #[test]
    fn generated_problems_are_valid() {
        for seed in 0..20 {
            let p = generate(&GenConfig::new(10, seed)).unwrap();
            assert!(validate_problem(&p).is_empty(), "{:?}", validate_problem(&p));
            assert!((500..=3000).contains(&p.horizon));
            for j in &p.jobs {
                assert_eq!(j.u - j.q - j.f, j.max_duration().unwrap());
                assert_eq!(j.history.len(), 50);
                assert!(j.deps.len() <= 3);
                assert!(j.history.iter().all(|h| (10..=30).contains(&h.duration) && (5..=10).contains(&h.cpu)));
            }
        }
    }

    #[test]
    fn same_seed_same_problem() {
        assert_eq!(generate(&GenConfig::new(15, 4)).unwrap(), generate(&GenConfig::new(15, 4)).unwrap());
        assert_ne!(generate(&GenConfig::new(15, 4)).unwrap(), generate(&GenConfig::new(15, 5)).unwrap());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(generate(&GenConfig::new(0, 1)).is_err());
        let mut cfg = GenConfig::new(3, 1);
        cfg.horizon_range = (50, 60);
        assert!(matches!(generate(&cfg), Err(GenError::HorizonTooSmall { .. })));
    }
}
