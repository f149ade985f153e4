//! Robot side of the hand-over cell: calibrated waypoints, execution paths,
//! the newline-delimited setpoint protocol, a client, and a simulated robot
//! that speaks the protocol over TCP or an in-process virtual-time link.

pub mod client;
pub mod error;
pub mod invariants;
pub mod link;
pub mod pose;
pub mod proto;
pub mod server;
pub mod sim;
pub mod trials;
pub mod waypoints;

pub use client::{ExecutionLog, LogEntry, Outcome, RobotClient};
pub use error::{Result, RobotError};
pub use link::{FaultProfile, SimLink, TcpTransport, Transport};
pub use pose::{ExecutionPath, Pose, Setpoint, StepType};
pub use proto::Message;
pub use sim::{RobotState, SimConfig, SimRobot};
