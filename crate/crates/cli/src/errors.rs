//! Error classes mapped one-to-one onto process exit codes.
//!
//! The partition is part of the command-line contract: scripts driving the
//! binary branch on the exit code alone. Configuration problems are `1`,
//! input-data problems are `2`, failures while the run is underway are `3`,
//! and unreadable or incompatible checkpoints are `4`.

use std::fmt;

use autoquant_core::data::DataError;
use autoquant_core::orchestrator::OrchestratorError;

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or arguments (exit 1).
    Config(String),
    /// Missing or malformed input data (exit 2).
    Data(String),
    /// Failure during an otherwise well-formed run (exit 3).
    Runtime(String),
    /// Missing, corrupt, or version-incompatible checkpoint (exit 4).
    Checkpoint(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Checkpoint(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration: {m}"),
            CliError::Data(m) => write!(f, "data: {m}"),
            CliError::Runtime(m) => write!(f, "runtime: {m}"),
            CliError::Checkpoint(m) => write!(f, "checkpoint: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<OrchestratorError> for CliError {
    fn from(e: OrchestratorError) -> Self {
        match e {
            OrchestratorError::Checkpoint(_) | OrchestratorError::CheckpointVersion { .. } => {
                CliError::Checkpoint(e.to_string())
            }
            OrchestratorError::Data(_) => CliError::Data(e.to_string()),
            OrchestratorError::BadBudget(_)
            | OrchestratorError::EmptyMethods
            | OrchestratorError::UnknownMethod(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(format!("serialization: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_partition_the_error_classes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 1);
        assert_eq!(CliError::Data("x".into()).exit_code(), 2);
        assert_eq!(CliError::Runtime("x".into()).exit_code(), 3);
        assert_eq!(CliError::Checkpoint("x".into()).exit_code(), 4);
    }

    #[test]
    fn orchestrator_errors_map_to_the_declared_classes() {
        let version = OrchestratorError::CheckpointVersion { found: 9, expected: 1 };
        assert_eq!(CliError::from(version).exit_code(), 4);
        let corrupt = OrchestratorError::Checkpoint("no store.json".into());
        assert_eq!(CliError::from(corrupt).exit_code(), 4);
        let budget = OrchestratorError::BadBudget("empty".into());
        assert_eq!(CliError::from(budget).exit_code(), 1);
        let backend = OrchestratorError::Backend("exploded".into());
        assert_eq!(CliError::from(backend).exit_code(), 3);
    }
}
