use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum RobotError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("connection error: {0}")]
    Connection(#[from] std::io::Error),
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("invalid pose: {0}")]
    Pose(String),
    #[error("cannot build execution path for classes {classes:?}: {message}")]
    Path { classes: Vec<u32>, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl RobotError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RobotError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = RobotError> = std::result::Result<T, E>;
