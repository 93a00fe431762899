use std::path::PathBuf;

use thiserror::Error;

use crate::grid::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid per-unit base: {0}")]
    InvalidBase(String),

    #[error("network failed validation: {}", format_violations(.0))]
    InvalidNetwork(Vec<Violation>),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("zero voltage magnitude at bus {bus}")]
    ZeroVoltage { bus: usize },

    #[error("power flow did not converge after {iterations} iterations (last change {last_change:.3e})")]
    PowerFlowDiverged { iterations: usize, last_change: f64 },

    #[error("non-positive supporting current on branch {branch}")]
    SupportingCurrent { branch: usize },

    #[error("malformed linear program: {0}")]
    MalformedProblem(String),

    #[error("warm start shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("linear program is infeasible{}", binding_suffix(.binding))]
    Infeasible { binding: Vec<String> },

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("LP solver failure: {0}")]
    Solver(String),

    #[error("FBS-OPF voltage change did not decrease over {iterations} iterations")]
    NotConverging { iterations: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("problem of {variables} variables exceeds the configured cap of {cap}")]
    TooLarge { variables: usize, cap: usize },

    #[error("results come from different scenarios ({left} vs {right})")]
    ScenarioMismatch { left: String, right: String },

    #[error("scenario rejected:\n  {}", .0.join("\n  "))]
    Schema(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

fn binding_suffix(families: &[String]) -> String {
    if families.is_empty() {
        String::new()
    } else {
        format!(" (binding: {})", families.join(", "))
    }
}
