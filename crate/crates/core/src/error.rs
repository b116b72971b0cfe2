use alloc::string::String;

/// Errors raised by the pure domain layer.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("invalid severity rating {0}; expected 0-4")]
    InvalidSeverity(i64),
    #[error("invalid heuristic id {0}; expected 1-10")]
    InvalidHeuristic(i64),
    #[error("scenario text is empty")]
    EmptyScenario,
    #[error("task {0} has no screenshots")]
    EmptyTask(u32),
    #[error("screenshot payload is empty or not a PNG/JPEG image")]
    InvalidMedia,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("master set is empty")]
    EmptyMaster,
    #[error("coverage denominator is zero")]
    EmptyDenominator,
    #[error("baseline run has no issues")]
    EmptyBaseline,
    #[error("trend needs at least two tasks, found {0}")]
    TrendUndefined(usize),
    #[error("no reports to aggregate")]
    NoReports,
    #[error("report links unknown master entry {0}")]
    UnknownMasterEntry(String),
    #[error("invalid reference: {0}")]
    InvalidReference(String),
    #[error("stale decision: {0}")]
    StaleDecision(String),
    #[error("conflict: {0}")]
    Conflict(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
