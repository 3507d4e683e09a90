//! Problem files: JSON with `horizon` and `jobs`, jobs sorted by id.

use std::fs;
use std::path::Path;

use crate::domain::{validate_problem, Problem, Violation};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid problem: {}", describe(.0))]
    Invalid(Vec<Violation>),
}

fn describe(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl LoadError {
    /// Job ids named by validation failures.
    pub fn job_ids(&self) -> Vec<String> {
        match self {
            LoadError::Invalid(v) => {
                let mut ids: Vec<String> = v.iter().flat_map(|x| x.jobs()).map(str::to_owned).collect();
                ids.sort();
                ids.dedup();
                ids
            }
            _ => Vec::new(),
        }
    }
}

pub fn parse_problem(text: &str) -> Result<Problem, LoadError> {
    let p: Problem = serde_json::from_str(text).map_err(|e| LoadError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let violations = validate_problem(&p);
    if !violations.is_empty() {
        return Err(LoadError::Invalid(violations));
    }
    Ok(p)
}

pub fn load_problem(path: &Path) -> Result<Problem, LoadError> {
    let text = fs::read_to_string(path)
        .map_err(|source| LoadError::Io { path: path.display().to_string(), source })?;
    parse_problem(&text)
}

/// Canonical text: jobs sorted by id, pretty-printed, trailing newline.
pub fn problem_to_string(p: &Problem) -> String {
    let mut s = serde_json::to_string_pretty(&p.canonicalized()).expect("problem serializes");
    s.push('\n');
    s
}

pub fn save_problem(p: &Problem, path: &Path) -> std::io::Result<()> {
    fs::write(path, problem_to_string(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = r#"{"horizon": 100, "jobs": [{"id": "a", "q": 0, "f": 5, "u": 40, "history": [[10, 2]]}]}"#;

    #[test]
    fn minimal_file() {
        let p = parse_problem(ONE).unwrap();
        assert_eq!(p.jobs.len(), 1);
        assert!(p.jobs[0].deps.is_empty());
        assert_eq!(p.jobs[0].history[0].cpu, 2);
    }

    #[test]
    fn cycle_rejection_names_jobs() {
        let text = r#"{"horizon": 100, "jobs": [
            {"id": "a", "q": 0, "f": 5, "u": 40, "deps": ["b"], "history": [[1, 1]]},
            {"id": "b", "q": 0, "f": 5, "u": 40, "deps": ["a"], "history": [[1, 1]]}]}"#;
        let err = parse_problem(text).unwrap_err();
        assert_eq!(err.job_ids(), vec!["a", "b"]);
        assert!(err.to_string().contains("cycle: {a,b}"), "{err}");
    }

    #[test]
    fn parse_errors_carry_position() {
        match parse_problem("{\"horizon\": 100,\n \"jobs\": [{\"id\": 3}]}") {
            Err(LoadError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip_is_canonical() {
        let text = r#"{"horizon": 100, "jobs": [
            {"id": "b", "q": 1, "f": 5, "u": 40, "deps": ["a"], "history": [[3, 1], [1, 4]]},
            {"id": "a", "q": 0, "f": 5, "u": 40, "history": [[10, 2]]}]}"#;
        let once = problem_to_string(&parse_problem(text).unwrap());
        let twice = problem_to_string(&parse_problem(&once).unwrap());
        assert_eq!(once, twice);
        assert!(once.find("\"a\"").unwrap() < once.find("\"b\"").unwrap());
    }
}
