use thiserror::Error;

use crate::model::{ServiceClass, Violation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PhyError {
    #[error("invalid PHY configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported modulation and coding scheme `{0}`")]
    UnsupportedMcs(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CacError {
    #[error("channel bandwidth must be positive, got {0} Hz")]
    NonPositiveBandwidth(f64),
    #[error("no {0} connection to release")]
    Underflow(ServiceClass),
    #[error("state {0} violates the cell configuration")]
    InvalidState(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchedulerError {
    #[error("durations must be positive (max MPDU delay {max_mpdu_delay} ms, latency {latency} ms)")]
    NonPositiveDuration { max_mpdu_delay: f64, latency: f64 },
    #[error("max MPDU delay {max_mpdu_delay} ms exceeds the rtPS latency {latency} ms")]
    DelayExceedsLatency { max_mpdu_delay: f64, latency: f64 },
    #[error("UGS reservations ({reserved} kbps) exceed the total bandwidth ({total} kbps)")]
    UgsOvercommit { reserved: f64, total: f64 },
    #[error("fairness index needs at least one rate")]
    EmptyRates,
    #[error("fairness index is undefined when every rate is zero")]
    AllZeroRates,
    #[error("rates must be finite and non-negative, got {0}")]
    InvalidRate(f64),
    #[error("alpha must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("invalid state: {0}")]
    InvalidState(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CtmcError {
    #[error("invalid cell configuration: {}", join(.0))]
    InvalidConfig(Vec<Violation>),
    #[error("state space exceeds the configured cap of {cap} states")]
    StateSpaceTooLarge { cap: usize },
    #[error("stationary solve failed: {0}")]
    Singular(String),
    #[error("stationary solve left a negative probability {value} at state {state}")]
    NegativeProbability { state: usize, value: f64 },
    #[error("stationary residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },
    #[error("power iteration did not converge within {0} iterations")]
    NotConverged(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesError {
    #[error("invalid simulation configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid cell configuration: {}", join(.0))]
    InvalidCell(Vec<Violation>),
    #[error("reports were produced from different cell configurations")]
    MismatchedConfigs,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown scenario key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {message}")]
    InvalidValue {
        key: String,
        value: String,
        message: String,
    },
    #[error("malformed override `{0}` (expected key=value)")]
    MalformedOverride(String),
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error("scenario fails validation: {}", join(.0))]
    Invalid(Vec<Violation>),
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
