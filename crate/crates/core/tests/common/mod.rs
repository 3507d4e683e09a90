#![allow(dead_code)]

use capplan::domain::{HistoryRecord, JobSpec, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small random instance: n <= 5, horizon <= 30, history length <= 4.
/// Some are infeasible on purpose.
pub fn tiny_problem(seed: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = rng.gen_range(12..=30);
    let n = rng.gen_range(1..=5);
    let mut jobs: Vec<JobSpec> = Vec::new();
    for i in 0..n {
        let len = rng.gen_range(1..=4);
        let history: Vec<HistoryRecord> =
            (0..len).map(|_| HistoryRecord::new(rng.gen_range(1..=6), rng.gen_range(0..=5))).collect();
        let max_d = history.iter().map(|h| h.duration).max().unwrap();
        let q = rng.gen_range(0..=horizon - 8);
        let f = rng.gen_range(0..=5);
        let u = (q + f + max_d + rng.gen_range(-2..=3)).clamp(q + 1, horizon);
        let deps = jobs
            .iter()
            .filter(|_| rng.gen_bool(0.3))
            .map(|j| j.id.clone())
            .collect();
        jobs.push(JobSpec { id: format!("t{i}"), q, f, u, deps, history });
    }
    Problem::new(horizon, jobs)
}
