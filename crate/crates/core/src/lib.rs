//! Capacity planning and scheduling for job sets whose durations and CPU
//! usage are uncertain.
//!
//! The pipeline is: load or generate a [`domain::Problem`], build one of the
//! optimization models in [`model`] (deterministic estimator, pair-sampled
//! SAA, duration-only SAA, or the start-event linearization), solve it with
//! [`solver::solve`], then replay the schedule against fresh draws with
//! [`simulate::evaluate`] to measure peak reduction, capacity estimation
//! errors and deadline violations.

pub mod domain;
pub mod estimators;
pub mod experiment;
pub mod io;
pub mod model;
pub mod scenarios;
pub mod seeding;
pub mod simulate;
pub mod solver;
pub mod synthgen;

/// Integer time in seconds.
pub type Time = i64;
/// Integer CPU cores.
pub type Cores = i64;

pub use domain::{peak_usage, HistoryRecord, JobSpec, Problem, Realization, Schedule};
pub use estimators::EstimatorKind;
pub use model::ScheduleModel;
pub use solver::{solve, Solution, SolveConfig, SolveStatus, Strategy};
