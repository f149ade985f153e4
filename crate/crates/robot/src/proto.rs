//! Wire messages: one JSON document per line.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RobotError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Message {
    Setpoint {
        seq: u64,
        pose: [f64; 6],
        grip: u8,
    },
    Done {
        seq: u64,
    },
    Superseded {
        seq: u64,
    },
    Reset,
    /// From the client: stop the current move. From the server: the
    /// acknowledgement naming the cancelled seq.
    Abort {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
    Error {
        detail: String,
    },
}

impl Message {
    /// The seq this message closes, if it is a terminal reply.
    pub fn terminal_seq(&self) -> Option<u64> {
        match self {
            Message::Done { seq } | Message::Superseded { seq } => Some(*seq),
            Message::Abort { seq } => *seq,
            _ => None,
        }
    }

    pub fn encode(&self) -> String {
        let mut line = serde_json::to_string(self).expect("message serialises");
        line.push('\n');
        line
    }

    pub fn decode(line: &str) -> Result<Message> {
        serde_json::from_str(line.trim())
            .map_err(|e| RobotError::Protocol(format!("malformed message {:?}: {e}", line.trim())))
    }
}
