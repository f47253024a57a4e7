use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApproxError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid network shape: {0}")]
    Shape(String),
    #[error("invalid parameter layout: {0}")]
    Layout(String),
    #[error("operation requires a scalar-output network, this one has {0} outputs")]
    NonScalar(usize),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("step called on a finished episode; call reset first")]
    EpisodeDone,
    #[error("step called before reset")]
    NotReset,
    #[error("action has {got} dimensions, environment expects {expected}")]
    ActionDimension { expected: usize, got: usize },
    #[error("unknown environment `{0}` (expected `pointmass1d` or `lqr`)")]
    UnknownEnv(String),
    #[error("invalid safety configuration: {0}")]
    Safety(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("requested {requested} transitions but the buffer holds {available}")]
    Insufficient { requested: usize, available: usize },
    #[error("split fraction must lie strictly between 0 and 1, got {0}")]
    Split(f64),
    #[error("penalty buffer is empty")]
    EmptyPenalties,
    #[error("episode penalty must lie in [0, 1], got {0}")]
    PenaltyRange(f64),
    #[error("capacity must be at least 1")]
    Capacity,
}

/// Failures inside a learner iteration.
#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("validation split is empty")]
    EmptyValidation,
    #[error("invalid agent configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("telemetry holds {have} episodes, window needs {need}")]
    ShortTelemetry { have: usize, need: usize },
    #[error("window must be at least 1")]
    EmptyWindow,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("telemetry error: {0}")]
    Telemetry(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
}

impl HarnessError {
    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Self::Io { path: path.as_ref().display().to_string(), source }
    }
}
