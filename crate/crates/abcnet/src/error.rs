//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AbcError {
    /// Configuration file problems: unknown keys, bad values, missing sections.
    #[error("config error: {0}")]
    Config(String),

    /// Structured-text parse failure with a 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A distribution or simulator parameter outside its legal domain.
    #[error("parameter domain error: {0}")]
    Domain(String),

    /// Dimension/layout mismatch between vectors that must line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// Lookup of a parameter, model, or counter name that does not exist.
    #[error("unknown name: {0}")]
    UnknownName(String),

    /// A particle exceeded the per-particle attempt budget.
    #[error("stall in population {population} at epsilon {epsilon}: a particle exceeded {max_attempts} attempts")]
    Stall {
        population: usize,
        epsilon: f64,
        max_attempts: u64,
    },

    /// The epsilon schedule failed to decrease strictly.
    #[error("schedule stall before population {population}: next epsilon {next} is not strictly below {prev}")]
    ScheduleStall {
        population: usize,
        prev: f64,
        next: f64,
    },

    /// Rejection run accepted nothing.
    #[error("empty posterior: no draws were accepted at epsilon {epsilon}; raise epsilon or the simulation budget")]
    EmptyPosterior { epsilon: f64 },

    /// Covariance estimation or inversion failed.
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),

    /// A population collapsed to a point and the degeneracy floor was disabled.
    #[error("degenerate population: {0}")]
    DegeneratePopulation(String),

    /// Log-sum-exp or weight arithmetic underflowed to zero everywhere.
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    /// Sweep grid larger than the configured budget.
    #[error("sweep budget exceeded: grid has {points:e} points, budget is {budget:e}")]
    BudgetExceeded { points: f64, budget: f64 },

    /// I/O failure annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl AbcError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        AbcError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 config/usage, 3 stall, 4 I/O, 5 sweep budget.
    pub fn exit_code(&self) -> i32 {
        match self {
            AbcError::Config(_)
            | AbcError::Parse { .. }
            | AbcError::Domain(_)
            | AbcError::Shape(_)
            | AbcError::UnknownName(_) => 2,
            AbcError::Stall { .. } | AbcError::ScheduleStall { .. } => 3,
            AbcError::Io { .. } => 4,
            AbcError::BudgetExceeded { .. } => 5,
            AbcError::EmptyPosterior { .. }
            | AbcError::DegenerateCovariance(_)
            | AbcError::DegeneratePopulation(_)
            | AbcError::NumericalDegeneracy(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, AbcError>;
