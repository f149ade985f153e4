use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::ChangeRecord;
use crate::error::{Error, Result};
use crate::io;
use crate::labels::IntentionLabel;

/// Interaction-time statistics for one class. `tau_ms` is the delay from
/// the end of an intention to the state change it causes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTiming {
    pub tau_ms: i64,
    pub spread_ms: i64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItmModel {
    #[serde(rename = "D_ms")]
    pub d_ms: i64,
    pub global_tau_ms: i64,
    pub classes: BTreeMap<u32, ClassTiming>,
}

impl ItmModel {
    /// Per-class tau, falling back to the pooled value for unseen classes.
    pub fn tau_for(&self, class_id: u32) -> i64 {
        self.classes
            .get(&class_id)
            .map(|c| c.tau_ms)
            .unwrap_or(self.global_tau_ms)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: ItmModel = io::read_json(path)?;
        if model.d_ms <= 0 {
            return Err(Error::Validation("ITM D_ms must be positive".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    ClassMismatch,
    LabelEndsAfterChange,
    UnmatchedChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedPair {
    pub label: IntentionLabel,
    pub change: ChangeRecord,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItmFit {
    pub model: ItmModel,
    pub rejected: Vec<RejectedPair>,
}

/// Median of integers; even counts take the floor of the two middle values.
fn median(sorted: &[i64]) -> i64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]).div_euclid(2)
    }
}

fn median_and_mad(mut xs: Vec<i64>) -> (i64, i64) {
    xs.sort_unstable();
    let m = median(&xs);
    let mut dev: Vec<i64> = xs.iter().map(|x| (x - m).abs()).collect();
    dev.sort_unstable();
    (m, median(&dev))
}

/// Fits per-class interaction times: median gap from label end to state
/// change, with the median absolute deviation as spread.
pub fn fit_itm(pairs: &[(IntentionLabel, ChangeRecord)], d_ms: i64) -> Result<ItmFit> {
    if pairs.is_empty() {
        return Err(Error::Empty("no label/state-change pairs to fit".into()));
    }
    if d_ms <= 0 {
        return Err(Error::Config("intention length must be positive".into()));
    }
    let mut per_class: BTreeMap<u32, Vec<i64>> = BTreeMap::new();
    let mut pooled = Vec::new();
    let mut rejected = Vec::new();
    for (label, change) in pairs {
        let reason = match change.class_id {
            None => Some(RejectReason::UnmatchedChange),
            Some(c) if c != label.class_id => Some(RejectReason::ClassMismatch),
            Some(_) if change.t_ms < label.t_end_ms => Some(RejectReason::LabelEndsAfterChange),
            Some(_) => None,
        };
        if let Some(reason) = reason {
            rejected.push(RejectedPair {
                label: label.clone(),
                change: change.clone(),
                reason,
            });
            continue;
        }
        let gap = change.t_ms - label.t_end_ms;
        per_class.entry(label.class_id).or_default().push(gap);
        pooled.push(gap);
    }
    if pooled.is_empty() {
        return Err(Error::Empty("every pair was rejected".into()));
    }
    let classes = per_class
        .into_iter()
        .map(|(class_id, gaps)| {
            let count = gaps.len();
            let (tau_ms, spread_ms) = median_and_mad(gaps);
            (
                class_id,
                ClassTiming {
                    tau_ms,
                    spread_ms,
                    count,
                },
            )
        })
        .collect();
    let (global_tau_ms, _) = median_and_mad(pooled);
    Ok(ItmFit {
        model: ItmModel {
            d_ms,
            global_tau_ms,
            classes,
        },
        rejected,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Pairing {
    pub pairs: Vec<(IntentionLabel, ChangeRecord)>,
    pub unpaired_labels: Vec<IntentionLabel>,
    pub unpaired_changes: Vec<ChangeRecord>,
}

/// Pairs each label with the earliest same-class change at or after the
/// label's end and before the next same-class label starts.
pub fn pair_labels_to_changes(labels: &[IntentionLabel], changes: &[ChangeRecord]) -> Pairing {
    let mut labels: Vec<&IntentionLabel> = labels.iter().collect();
    labels.sort_by(|a, b| a.time_cmp(b));
    let mut changes_sorted: Vec<&ChangeRecord> = changes.iter().collect();
    changes_sorted.sort_by_key(|c| c.t_ms);
    let mut used = vec![false; changes_sorted.len()];
    let mut out = Pairing::default();

    for (idx, label) in labels.iter().enumerate() {
        let next_same = labels[idx + 1..]
            .iter()
            .find(|l| l.class_id == label.class_id)
            .map(|l| l.t_start_ms)
            .unwrap_or(i64::MAX);
        let found = changes_sorted.iter().enumerate().find(|(k, c)| {
            !used[*k]
                && c.class_id == Some(label.class_id)
                && c.t_ms >= label.t_end_ms
                && c.t_ms < next_same
        });
        match found {
            Some((k, c)) => {
                used[k] = true;
                out.pairs.push(((*label).clone(), (*c).clone()));
            }
            None => out.unpaired_labels.push((*label).clone()),
        }
    }
    out.unpaired_changes = changes_sorted
        .iter()
        .zip(&used)
        .filter(|(_, u)| !**u)
        .map(|(c, _)| (*c).clone())
        .collect();
    out
}
