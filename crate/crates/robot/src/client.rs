use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RobotError};
use crate::link::Transport;
use crate::pose::ExecutionPath;
use crate::proto::Message;

pub const DEFAULT_TIMEOUT_MS: i64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub send_t_ms: i64,
    pub done_t_ms: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    /// No DONE arrived in time; an ABORT was sent for `seq`.
    TimedOut { seq: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionLog {
    pub intention_class: u32,
    pub entries: Vec<LogEntry>,
    #[serde(flatten)]
    pub outcome: Outcome,
}

impl ExecutionLog {
    pub fn completed(&self) -> bool {
        self.outcome == Outcome::Completed
    }

    /// First send to last DONE.
    pub fn duration_ms(&self) -> i64 {
        match (self.entries.first(), self.entries.last()) {
            (Some(a), Some(b)) => b.done_t_ms - a.send_t_ms,
            _ => 0,
        }
    }
}

/// Sends setpoints one at a time and waits for each DONE. One client per
/// connection; seqs start at 1 and never repeat on it.
pub struct RobotClient<T: Transport> {
    transport: T,
    next_seq: u64,
    completed: BTreeSet<u64>,
    /// Seqs given up on; their late replies are expected and dropped.
    abandoned: BTreeSet<u64>,
}

impl<T: Transport> RobotClient<T> {
    pub fn new(transport: T) -> Self {
        RobotClient {
            transport,
            next_seq: 1,
            completed: BTreeSet::new(),
            abandoned: BTreeSet::new(),
        }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    pub fn into_transport(self) -> T {
        self.transport
    }

    pub fn now_ms(&self) -> i64 {
        self.transport.now_ms()
    }

    /// Sends RESET; the robot returns to its start pose without replying.
    pub fn reset(&mut self) -> Result<()> {
        self.transport.send(&Message::Reset)
    }

    pub fn execute(&mut self, path: &ExecutionPath, timeout_ms: i64) -> Result<ExecutionLog> {
        let mut log = ExecutionLog {
            intention_class: path.intention_class,
            entries: Vec::with_capacity(path.setpoints.len()),
            outcome: Outcome::Completed,
        };
        for sp in &path.setpoints {
            let seq = self.next_seq;
            self.next_seq += 1;
            let send_t_ms = self.transport.now_ms();
            self.transport.send(&Message::Setpoint {
                seq,
                pose: sp.pose.to_array(),
                grip: sp.grip,
            })?;
            let deadline = send_t_ms + timeout_ms;
            loop {
                let remaining = deadline - self.transport.now_ms();
                let msg = if remaining > 0 {
                    self.transport.recv_timeout(remaining)?
                } else {
                    None
                };
                let Some(msg) = msg else {
                    self.transport.send(&Message::Abort { seq: Some(seq) })?;
                    self.abandoned.insert(seq);
                    log.outcome = Outcome::TimedOut { seq };
                    return Ok(log);
                };
                if self.accept(seq, &msg)? {
                    self.completed.insert(seq);
                    log.entries.push(LogEntry {
                        seq,
                        send_t_ms,
                        done_t_ms: self.transport.now_ms(),
                    });
                    break;
                }
            }
        }
        Ok(log)
    }

    /// Whether `msg` completes `seq`. Late replies for abandoned seqs are
    /// dropped; anything else unexpected is a protocol error.
    fn accept(&self, seq: u64, msg: &Message) -> Result<bool> {
        if let Some(k) = msg.terminal_seq() {
            if self.abandoned.contains(&k) {
                return Ok(false);
            }
        }
        match msg {
            Message::Done { seq: k } if *k == seq => Ok(true),
            Message::Done { seq: k } if self.completed.contains(k) => {
                Err(RobotError::Protocol(format!("duplicate DONE for seq {k}")))
            }
            Message::Done { seq: k } => Err(RobotError::Protocol(format!(
                "DONE for seq {k} while waiting for seq {seq}"
            ))),
            Message::Superseded { seq: k } => Err(RobotError::Protocol(format!(
                "seq {k} superseded; the client never overlaps setpoints"
            ))),
            Message::Error { detail } => Err(RobotError::Protocol(format!("robot error: {detail}"))),
            other => Err(RobotError::Protocol(format!("unexpected reply {other:?}"))),
        }
    }
}
