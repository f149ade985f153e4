use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum OrchestrateError {
    #[error("config error: {0}")]
    Config(String),
    #[error("scripted predictions in {path} exhausted at window {window_start_ms}")]
    ScriptExhausted { path: PathBuf, window_start_ms: i64 },
    #[error("scripted prediction at line {line} of {path} is for window {found}, expected {expected}")]
    ScriptMismatch {
        path: PathBuf,
        line: usize,
        expected: i64,
        found: i64,
    },
    #[error(transparent)]
    Core(#[from] slb_core::Error),
    #[error(transparent)]
    Robot(#[from] slb_robot::RobotError),
}

pub type Result<T, E = OrchestrateError> = std::result::Result<T, E>;
