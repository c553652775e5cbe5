use std::path::PathBuf;

use crate::geometry::Pose;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("registration failed: {0}")]
    RegistrationFailed(String),

    #[error("unconstrained alignment: no inter-session loop constraint was accepted")]
    Unconstrained,

    /// The solver stopped making progress; `last` holds the final iterate.
    #[error("optimization failed after {iterations} iterations (cost {cost:.6e})")]
    OptimizationFailed {
        iterations: usize,
        cost: f64,
        last: Vec<Pose>,
    },

    #[error("session mismatch: expected session {expected}, found {found}")]
    SessionMismatch { expected: u32, found: u32 },

    #[error("version {0} is not reachable from the current version")]
    Unreachable(u32),

    #[error("trajectory leaves the world bounds at keyframe {0}")]
    OutOfBounds(usize),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl std::fmt::Display, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            msg: msg.into(),
        }
    }
}
