use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::labels::IntentionLabel;
use crate::rng::{fnv1a, PortableRng};

/// A non-intention window, class 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeWindow {
    pub recording_id: String,
    pub t_start_ms: i64,
    pub t_end_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeSampling {
    pub windows: Vec<NegativeWindow>,
    pub requested: usize,
    /// How many requested windows did not fit.
    pub shortfall: usize,
}

/// Free intervals `[start, end)` of `[0, duration)` after removing every
/// label widened by `margin_ms` on both sides.
fn free_intervals(duration_ms: i64, labels: &[IntentionLabel], margin_ms: i64) -> Vec<(i64, i64)> {
    let mut blocked: Vec<(i64, i64)> = labels
        .iter()
        .map(|l| (l.t_start_ms - margin_ms, l.t_end_ms + margin_ms))
        .collect();
    blocked.sort_unstable();
    let mut free = Vec::new();
    let mut cursor = 0;
    for (s, e) in blocked {
        if s > cursor {
            free.push((cursor, s.min(duration_ms)));
        }
        cursor = cursor.max(e);
        if cursor >= duration_ms {
            break;
        }
    }
    if cursor < duration_ms {
        free.push((cursor, duration_ms));
    }
    free.retain(|(s, e)| e > s);
    free
}

/// Samples `count_per_class` windows per positive class present, each of
/// length `d_ms`, from outside all labels and their margins.
///
/// Sampling is seeded by `seed` and the recording id. Each draw picks a free
/// gap with probability proportional to the number of start positions it
/// offers, then a uniform start inside it, and splits the gap around the
/// chosen window so later draws never overlap it.
pub fn extract_negative_windows(
    recording_id: &str,
    duration_ms: i64,
    labels: &[IntentionLabel],
    d_ms: i64,
    count_per_class: usize,
    margin_ms: i64,
    seed: u64,
) -> NegativeSampling {
    let classes: BTreeSet<u32> = labels
        .iter()
        .filter(|l| l.class_id != 0)
        .map(|l| l.class_id)
        .collect();
    let requested = count_per_class * classes.len();
    let mut rng = PortableRng::new(seed ^ fnv1a(recording_id));
    let mut gaps = free_intervals(duration_ms, labels, margin_ms);
    let mut windows = Vec::with_capacity(requested);

    while windows.len() < requested {
        let slack: Vec<i64> = gaps.iter().map(|(s, e)| (e - s - d_ms + 1).max(0)).collect();
        let total: i64 = slack.iter().sum();
        if total == 0 {
            break;
        }
        let mut pick = rng.int_range(0, total - 1);
        let mut gi = 0;
        while pick >= slack[gi] {
            pick -= slack[gi];
            gi += 1;
        }
        let (gs, ge) = gaps[gi];
        let start = gs + pick;
        windows.push(NegativeWindow {
            recording_id: recording_id.to_string(),
            t_start_ms: start,
            t_end_ms: start + d_ms,
        });
        gaps.splice(gi..=gi, [(gs, start), (start + d_ms, ge)]);
    }
    windows.sort_by_key(|w| w.t_start_ms);
    NegativeSampling {
        shortfall: requested - windows.len(),
        windows,
        requested,
    }
}
