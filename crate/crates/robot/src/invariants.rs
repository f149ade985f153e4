//! Checks over a robot's message history.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::pose::Pose;
use crate::proto::Message;
use crate::sim::RobotState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateTerminal { seq: u64 },
    MissingTerminal { seq: u64 },
    UnknownSeq { seq: u64 },
    /// DONE for `seq` went out while `pending` had no terminal reply.
    DoneOutOfOrder { seq: u64, pending: u64 },
    GripperClosedAfterReset,
    NotAtResetPose { distance: f64 },
}

/// Checks the robot's emitted replies against the setpoints it received.
/// With `settled`, every received setpoint must have been answered.
pub fn check_replies(received: &[Message], emitted: &[Message], settled: bool) -> Vec<Violation> {
    let seqs: BTreeSet<u64> = received
        .iter()
        .filter_map(|m| match m {
            Message::Setpoint { seq, .. } => Some(*seq),
            _ => None,
        })
        .collect();
    let mut answered: BTreeMap<u64, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for msg in emitted {
        let Some(seq) = msg.terminal_seq() else {
            continue;
        };
        if !seqs.contains(&seq) {
            out.push(Violation::UnknownSeq { seq });
            continue;
        }
        if let Message::Done { .. } = msg {
            if let Some(pending) = seqs.range(..seq).find(|j| !answered.contains_key(j)) {
                out.push(Violation::DoneOutOfOrder {
                    seq,
                    pending: *pending,
                });
            }
        }
        let n = answered.entry(seq).or_default();
        *n += 1;
        if *n == 2 {
            out.push(Violation::DuplicateTerminal { seq });
        }
    }
    if settled {
        for seq in seqs.iter().filter(|s| !answered.contains_key(s)) {
            out.push(Violation::MissingTerminal { seq: *seq });
        }
    }
    out
}

/// After a completed path or a RESET the gripper is open and the robot is
/// at the reset pose.
pub fn check_rest_state(state: &RobotState, reset_pose: &Pose) -> Vec<Violation> {
    let mut out = Vec::new();
    if state.gripper_closed {
        out.push(Violation::GripperClosedAfterReset);
    }
    let distance = state.current_pose.distance(reset_pose);
    if distance > 1e-6 {
        out.push(Violation::NotAtResetPose { distance });
    }
    out
}
