use serde::{Deserialize, Serialize};

use crate::error::{OrchestrateError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowDescriptor {
    pub recording_id: String,
    pub t_start_ms: i64,
    pub t_end_ms: i64,
}

impl WindowDescriptor {
    pub fn overlap_ms(&self, t_start_ms: i64, t_end_ms: i64) -> i64 {
        (self.t_end_ms.min(t_end_ms) - self.t_start_ms.max(t_start_ms)).max(0)
    }
}

/// Windows `[k*stride, k*stride + d]` that end within the recording.
pub fn window_stream(recording_id: &str, duration_ms: i64, d_ms: i64, stride_ms: i64) -> Result<Vec<WindowDescriptor>> {
    if stride_ms < 1 || d_ms < stride_ms {
        return Err(OrchestrateError::Config(format!(
            "need 1 <= stride ({stride_ms}) <= window ({d_ms})"
        )));
    }
    Ok((0..)
        .map(|k| k * stride_ms)
        .take_while(|s| s + d_ms <= duration_ms)
        .map(|s| WindowDescriptor {
            recording_id: recording_id.to_string(),
            t_start_ms: s,
            t_end_ms: s + d_ms,
        })
        .collect())
}
