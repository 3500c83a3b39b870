use thiserror::Error;

use crate::model::TaskId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("task set is empty")]
    EmptyTaskSet,

    #[error("hyperperiod overflows the representable time range")]
    HyperperiodOverflow,

    #[error("task {0} is not part of the task set")]
    UnknownTask(TaskId),

    #[error("task {task} is not lower priority than victim {victim}")]
    NotLowerPriority { task: TaskId, victim: TaskId },

    #[error("invalid task set: {}", .0.join("; "))]
    Invalid(Vec<String>),

    #[error("delay sequence for task {task}: {reason}")]
    InvalidDelaySequence { task: TaskId, reason: String },

    #[error("actuation latency {latency} exceeds sampling period {period}")]
    LatencyOutOfRange { latency: f64, period: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is singular: {0}")]
    Singular(&'static str),

    #[error("riccati iteration diverged: {0}")]
    RiccatiDiverged(String),

    #[error("no delay sequence stored for control task {0}")]
    MissingDelaySequence(TaskId),

    #[error("utilization {utilization} is infeasible for {n} tasks")]
    InfeasibleUtilization { n: usize, utilization: f64 },

    #[error("{0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
