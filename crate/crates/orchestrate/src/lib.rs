//! Deployed-system loop: sliding windows feed an intention classifier,
//! recognized intentions dispatch robot paths, and weight-sensor state
//! changes check progress.

pub mod classify;
pub mod error;
pub mod session;
pub mod window;

pub use classify::{Classifier, NoisyClassifier, OracleClassifier, Prediction, ScriptedClassifier, StubConfig, StubMode};
pub use error::{OrchestrateError, Result};
pub use session::{
    run_session, AlarmKind, EventKind, Policy, SafeguardState, SequenceMode, SessionEvent, SessionInput,
    SessionLog, SessionOutcome,
};
pub use window::{window_stream, WindowDescriptor};
