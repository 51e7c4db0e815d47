//! Online detection of opponent policy switches from observed actions alone.
//!
//! The core statistic is a per-policy *running error*: on every observed
//! state-action pair, each candidate policy in a bank is charged the observed
//! error of the action under that policy minus a dynamic decay, and the sum is
//! clamped to `[0, threshold]`. When the currently assumed policy's running
//! error reaches the threshold, a switch is declared and the bank member with
//! the lowest running error takes over (its error halved to damp oscillation).
//!
//! The crate also ships the 10x10 predator-prey Markov game used to exercise
//! the detector, scripted chase policies standing in for trained agents, and a
//! deterministic experiment harness that produces CSV/JSON metrics.

pub mod agents;
pub mod detector;
pub mod error_estimation;
pub mod experiment;
pub mod gridworld;
pub mod metrics;
pub mod policy;
pub mod trace;

pub use agents::{ChasePolicy, PredatorId, PreyId, SwitchSchedule};
pub use detector::{Detector, DetectorConfig, DetectorUpdate, InitialAssumed, SwitchEvent};
pub use experiment::{AgentMode, ExperimentConfig, run_experiment, run_single, sweep_alpha};
pub use gridworld::{GridAction, GridConfig, GridState, JointAction, StepOutcome};
pub use metrics::{Metrics, MetricsRow, Summary};
pub use policy::{ActionDistribution, ObservedAction, Policy, PolicyBank, PolicyId, ResponseBank};

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid action distribution: {0}")]
    InvalidDistribution(String),
    #[error("action index {index} out of range for {n} actions")]
    InvalidActionIndex { index: usize, n: usize },
    #[error("action count must be at least 2, got {0}")]
    InvalidActionCount(usize),
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("policy bank must not be empty")]
    EmptyBank,
    #[error("policies in a bank must share one action count (expected {expected}, got {got})")]
    MixedActionCounts { expected: usize, got: usize },
    #[error("unknown policy id {0}")]
    UnknownPolicyId(usize),
    #[error("response bank must cover all {expected} opponent policies, got {got}")]
    ResponseBankMismatch { expected: usize, got: usize },
    #[error("invalid state key `{key}`: {reason}")]
    InvalidStateKey { key: String, reason: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("metrics contain no rows")]
    EmptyMetrics,
    #[error("metrics contain no scheduled switches")]
    NoSwitches,
    #[error("malformed trace line {line}: {reason}")]
    MalformedTraceLine { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
