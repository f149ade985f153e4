use serde::{Deserialize, Serialize};

use crate::detect::ChangeRecord;
use crate::error::{Error, Result};
use crate::labels::{IntentionLabel, LabelSource};

use super::ItmModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Unmatched,
    StartsBeforeRecording,
    OverlapsPreviousChange,
    OverlapsSameClassLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedChange {
    pub change: ChangeRecord,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelfLabels {
    pub labels: Vec<IntentionLabel>,
    pub dropped: Vec<DroppedChange>,
}

/// Places one intention window ending `tau` before each classified change.
pub fn generate_self_labels(changes: &[ChangeRecord], itm: &ItmModel) -> Result<SelfLabels> {
    if itm.classes.is_empty() {
        return Err(Error::Validation("interaction-time model has no classes".into()));
    }
    let mut sorted: Vec<&ChangeRecord> = changes.iter().collect();
    sorted.sort_by_key(|c| c.t_ms);

    let mut out = SelfLabels::default();
    let mut drop = |change: &ChangeRecord, reason| {
        out.dropped.push(DroppedChange {
            change: change.clone(),
            reason,
        })
    };
    let mut labels: Vec<IntentionLabel> = Vec::new();
    for (idx, change) in sorted.iter().enumerate() {
        let Some(class_id) = change.class_id else {
            drop(change, DropReason::Unmatched);
            continue;
        };
        let t_end_ms = change.t_ms - itm.tau_for(class_id);
        let label = IntentionLabel {
            class_id,
            t_start_ms: t_end_ms - itm.d_ms,
            t_end_ms,
            source: LabelSource::Slb,
        };
        if label.t_start_ms < 0 {
            drop(change, DropReason::StartsBeforeRecording);
            continue;
        }
        let prev_change = sorted[..idx]
            .iter()
            .rev()
            .find(|c| c.t_ms < change.t_ms)
            .map(|c| c.t_ms);
        if prev_change.is_some_and(|t| label.t_start_ms < t) {
            drop(change, DropReason::OverlapsPreviousChange);
            continue;
        }
        if labels
            .iter()
            .any(|l| l.class_id == class_id && l.overlaps(&label))
        {
            drop(change, DropReason::OverlapsSameClassLabel);
            continue;
        }
        labels.push(label);
    }
    labels.sort_by(|a, b| a.time_cmp(b));
    out.labels = labels;
    Ok(out)
}
