use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::gateway::ProviderError;

#[derive(Debug, Error)]
pub enum HevalError {
    #[error(transparent)]
    Core(#[from] heval_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("{} is not a heval project (no manifest.json)", .0.display())]
    NotAProject(PathBuf),

    #[error("{} already exists and is not empty", .0.display())]
    AlreadyExists(PathBuf),

    #[error("project schema version {found} is newer than this tool supports ({supported})")]
    IncompatibleVersion { found: u32, supported: u32 },

    #[error("project is locked by another writer ({}); delete the lock file if no other heval process is running", .0.display())]
    Locked(PathBuf),

    #[error("{}: {message}", file.display())]
    Media { file: PathBuf, message: String },

    #[error("{}:{line}: {message}", path.display())]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Provider(#[from] ProviderError),

    #[error("section {section} unavailable: needs {missing}")]
    SectionUnavailable { section: String, missing: String },

    #[error("version mismatch: client saw {expected}, project is at {actual}")]
    VersionMismatch { expected: u64, actual: u64 },

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = HevalError> = std::result::Result<T, E>;

impl HevalError {
    /// Stable machine-readable code for `--json-errors` and the HTTP API.
    pub fn code(&self) -> &'static str {
        use heval_core::Error as C;
        match self {
            HevalError::Core(e) => match e {
                C::InvalidSeverity(_) => "invalid_severity",
                C::InvalidHeuristic(_) => "invalid_heuristic",
                C::EmptyScenario => "empty_scenario",
                C::EmptyTask(_) => "empty_task",
                C::InvalidMedia => "invalid_media",
                C::Parameter(_) => "parameter",
                C::EmptyMaster => "empty_master",
                C::EmptyDenominator => "empty_denominator",
                C::EmptyBaseline => "empty_baseline",
                C::TrendUndefined(_) => "trend_undefined",
                C::NoReports => "no_reports",
                C::UnknownMasterEntry(_) => "unknown_master_entry",
                C::InvalidReference(_) => "invalid_reference",
                C::StaleDecision(_) => "stale_decision",
                C::Conflict(_) => "conflict",
            },
            HevalError::Io { .. } => "io",
            HevalError::Format { .. } => "format",
            HevalError::NotAProject(_) => "not_a_project",
            HevalError::AlreadyExists(_) => "already_exists",
            HevalError::IncompatibleVersion { .. } => "incompatible_version",
            HevalError::Locked(_) => "locked",
            HevalError::Media { .. } => "media",
            HevalError::Config { .. } => "config",
            HevalError::Provider(e) => e.code(),
            HevalError::SectionUnavailable { .. } => "section_unavailable",
            HevalError::VersionMismatch { .. } => "version_mismatch",
            HevalError::Invalid(_) => "invalid",
        }
    }
}

/// `map_err` adapter attaching a path to an IO error.
pub(crate) fn io_at(path: &Path) -> impl FnOnce(io::Error) -> HevalError + '_ {
    move |source| HevalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn json_at(path: &Path) -> impl FnOnce(serde_json::Error) -> HevalError + '_ {
    move |e| HevalError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}
