//! Point estimators that collapse a job's history into a single
//! (duration, cpu) pair for the deterministic models.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::JobSpec;
use crate::{Cores, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    P50,
    P75,
    P100,
    Mode,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] =
        [EstimatorKind::P50, EstimatorKind::P75, EstimatorKind::P100, EstimatorKind::Mode];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::P50 => "p50",
            EstimatorKind::P75 => "p75",
            EstimatorKind::P100 => "p100",
            EstimatorKind::Mode => "mode",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "p50" => Ok(EstimatorKind::P50),
            "p75" => Ok(EstimatorKind::P75),
            "p100" => Ok(EstimatorKind::P100),
            "mode" => Ok(EstimatorKind::Mode),
            other => Err(format!("unknown estimator {other:?} (expected p50|p75|p100|mode)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EstimateError {
    #[error("empty history")]
    EmptyHistory,
}

/// A job with its history replaced by point estimates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EstimatedJob {
    pub id: String,
    pub q: Time,
    pub f: Time,
    pub u: Time,
    pub deps: Vec<String>,
    pub d_hat: Time,
    pub r_hat: Cores,
}

/// Nearest-rank percentile: sorted ascending, 1-based rank `ceil(num/den * n)`.
fn nearest_rank(sorted: &[i64], num: usize, den: usize) -> i64 {
    let n = sorted.len();
    let rank = (num * n).div_ceil(den).max(1);
    sorted[rank - 1]
}

pub fn estimate(values: &[i64], kind: EstimatorKind) -> Result<i64, EstimateError> {
    if values.is_empty() {
        return Err(EstimateError::EmptyHistory);
    }
    let value = match kind {
        EstimatorKind::P100 => *values.iter().max().unwrap(),
        EstimatorKind::P50 | EstimatorKind::P75 => {
            let mut sorted = values.to_vec();
            sorted.sort_unstable();
            if kind == EstimatorKind::P50 {
                nearest_rank(&sorted, 1, 2)
            } else {
                nearest_rank(&sorted, 3, 4)
            }
        }
        EstimatorKind::Mode => {
            let mut counts: HashMap<i64, usize> = HashMap::new();
            for &v in values {
                *counts.entry(v).or_default() += 1;
            }
            // most frequent, then smallest value
            counts
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(v, _)| v)
                .unwrap()
        }
    };
    Ok(value)
}

/// Estimates the duration and cpu columns independently.
pub fn estimate_job(job: &JobSpec, kind: EstimatorKind) -> Result<EstimatedJob, EstimateError> {
    let durations: Vec<i64> = job.history.iter().map(|h| h.duration).collect();
    let cpus: Vec<i64> = job.history.iter().map(|h| h.cpu).collect();
    Ok(EstimatedJob {
        id: job.id.clone(),
        q: job.q,
        f: job.f,
        u: job.u,
        deps: job.deps.clone(),
        d_hat: estimate(&durations, kind)?,
        r_hat: estimate(&cpus, kind)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::HistoryRecord;
    use proptest::prelude::*;

    fn job_with(history: &[(i64, i64)]) -> JobSpec {
        JobSpec {
            id: "j".into(),
            q: 0,
            f: 0,
            u: 100,
            deps: vec![],
            history: history.iter().map(|&h| HistoryRecord::from(h)).collect(),
        }
    }

    #[test]
    fn worked_values() {
        assert_eq!(estimate(&[3, 1, 2], EstimatorKind::P100), Ok(3));
        assert_eq!(estimate(&[10, 20, 30, 40], EstimatorKind::P75), Ok(30));
        assert_eq!(estimate(&[2, 2, 3, 3, 1], EstimatorKind::Mode), Ok(2));
        assert_eq!(estimate(&[10, 20, 30, 40], EstimatorKind::P50), Ok(20));
        assert_eq!(estimate(&[7], EstimatorKind::P50), Ok(7));
        assert_eq!(estimate(&[], EstimatorKind::P50), Err(EstimateError::EmptyHistory));
    }

    #[test]
    fn job_estimates() {
        for kind in EstimatorKind::ALL {
            let e = estimate_job(&job_with(&[(10, 5)]), kind).unwrap();
            assert_eq!((e.d_hat, e.r_hat), (10, 5));
        }
        let e = estimate_job(&job_with(&[(10, 8), (20, 4)]), EstimatorKind::P100).unwrap();
        assert_eq!((e.d_hat, e.r_hat), (20, 8));
        let e = estimate_job(&job_with(&[(10, 5), (12, 5), (30, 9)]), EstimatorKind::P50).unwrap();
        assert_eq!((e.d_hat, e.r_hat), (12, 5));
        assert!(estimate_job(&job_with(&[]), EstimatorKind::Mode).is_err());
    }

    #[test]
    fn kind_strings() {
        for kind in EstimatorKind::ALL {
            assert_eq!(kind.as_str().parse::<EstimatorKind>(), Ok(kind));
        }
        assert!("P50".parse::<EstimatorKind>().is_err());
    }

    fn shuffled_pair() -> impl Strategy<Value = (Vec<i64>, Vec<i64>)> {
        prop::collection::vec(0i64..50, 1..30)
            .prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle()))
    }

    proptest! {
        #[test]
        fn permutation_invariant((values, shuffled) in shuffled_pair()) {
            for kind in EstimatorKind::ALL {
                prop_assert_eq!(estimate(&values, kind), estimate(&shuffled, kind));
            }
        }
    }
}
