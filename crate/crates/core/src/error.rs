use thiserror::Error;

/// Errors raised while building scenarios, integrating trajectories or optimizing.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("commuting matrix row {row} sums to {sum} (expected 1)")]
    NotStochastic { row: usize, sum: f64 },

    #[error("{name}[{index}] = {value} must be positive")]
    NonPositive {
        name: &'static str,
        index: usize,
        value: f64,
    },

    #[error("time {t} outside [0, {horizon}]")]
    Domain { t: f64, horizon: f64 },

    #[error("step {h} does not divide a week into whole steps")]
    StepOffWeekBoundary { h: f64 },

    #[error("control does not match the scenario: {0}")]
    ControlShape(String),

    #[error("integration failed (non-finite state) after t = {last_valid_time}")]
    IntegrationFailure { last_valid_time: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("incomplete trajectory: {0}")]
    IncompleteTrajectory(String),

    #[error("oracle refused: {dims} switch times exceed the guard of {max}")]
    OracleGuard { dims: usize, max: usize },

    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },

    #[error("malformed JSON: {0}")]
    Malformed(String),

    /// Every entry is `<JSON pointer>: <problem>`.
    #[error("scenario file rejected: {}", .0.join("; "))]
    Schema(Vec<String>),

    #[error("modelling assumptions violated: {}", .0.join("; "))]
    Assumptions(Vec<String>),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidScenario(_) => "invalid_scenario",
            Error::NotStochastic { .. } => "not_stochastic",
            Error::NonPositive { .. } => "non_positive",
            Error::Domain { .. } => "domain",
            Error::StepOffWeekBoundary { .. } => "step_off_week_boundary",
            Error::ControlShape(_) => "control_shape",
            Error::IntegrationFailure { .. } => "integration_failure",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::IncompleteTrajectory(_) => "incomplete_trajectory",
            Error::OracleGuard { .. } => "oracle_guard",
            Error::InvalidOptions(_) => "invalid_options",
            Error::Io { .. } => "io",
            Error::Malformed(_) => "malformed",
            Error::Schema(_) => "schema",
            Error::Assumptions(_) => "assumptions",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
