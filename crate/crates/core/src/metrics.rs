//! Post-annotation timing metrics used to sanity-check label definitions.

use serde::{Deserialize, Serialize};

use crate::detect::ChangeRecord;
use crate::error::{Error, Result};
use crate::labels::IntentionLabel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricAnomaly {
    /// No state change follows the label.
    NoFollowingChange { label_id: String },
    /// A state change falls inside the label window.
    OverlapsChange { label_id: String, change_t_ms: i64 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationMetrics {
    /// Length of each state segment: start to first change, between changes,
    /// last change to the end of the recording.
    pub state_durations_ms: Vec<i64>,
    pub intervals_between_states_ms: Vec<i64>,
    /// Previous state change to intention start (labels with a previous change).
    pub pre_intention_padding_ms: Vec<i64>,
    /// Intention end to the next state change.
    pub post_intention_padding_ms: Vec<i64>,
    pub anomalies: Vec<MetricAnomaly>,
}

pub fn compute_annotation_metrics(
    duration_ms: i64,
    labels: &[IntentionLabel],
    state_changes: &[ChangeRecord],
) -> Result<AnnotationMetrics> {
    if state_changes.windows(2).any(|p| p[1].t_ms < p[0].t_ms) {
        return Err(Error::Validation("state changes are not sorted by time".into()));
    }
    let times: Vec<i64> = state_changes.iter().map(|c| c.t_ms).collect();
    let mut m = AnnotationMetrics::default();

    let mut boundaries = Vec::with_capacity(times.len() + 2);
    boundaries.push(0);
    boundaries.extend(&times);
    boundaries.push(duration_ms);
    m.state_durations_ms = boundaries.windows(2).map(|p| p[1] - p[0]).collect();
    m.intervals_between_states_ms = times.windows(2).map(|p| p[1] - p[0]).collect();

    let mut sorted: Vec<&IntentionLabel> = labels.iter().collect();
    sorted.sort_by(|a, b| a.time_cmp(b));
    for label in sorted {
        let prev = times.partition_point(|&t| t <= label.t_start_ms);
        if prev > 0 {
            m.pre_intention_padding_ms
                .push(label.t_start_ms - times[prev - 1]);
        }
        if let Some(&inside) = times[prev..].iter().find(|&&t| t < label.t_end_ms) {
            m.anomalies.push(MetricAnomaly::OverlapsChange {
                label_id: label.label_id(),
                change_t_ms: inside,
            });
        }
        let next = times.partition_point(|&t| t < label.t_end_ms);
        match times.get(next) {
            Some(&t) => m.post_intention_padding_ms.push(t - label.t_end_ms),
            None => m.anomalies.push(MetricAnomaly::NoFollowingChange {
                label_id: label.label_id(),
            }),
        }
    }
    Ok(m)
}
