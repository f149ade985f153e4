//! Label agreement, confusion matrices and the annotation time report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::detect::ChangeRecord;
use crate::labels::IntentionLabel;

/// When a candidate label counts as reproducing a reference label. Class
/// equality is always required.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum MatchRule {
    Iou { threshold: f64 },
    Onset { tolerance_ms: i64 },
}

impl Default for MatchRule {
    fn default() -> Self {
        MatchRule::Iou { threshold: 0.5 }
    }
}

impl MatchRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MatchRule::Iou { threshold } if !(threshold > 0.0 && threshold <= 1.0) => Err(
                Error::Config(format!("IoU threshold must be in (0, 1], got {threshold}")),
            ),
            MatchRule::Onset { tolerance_ms } if tolerance_ms < 0 => Err(Error::Config(
                "onset tolerance must be >= 0".into(),
            )),
            _ => Ok(()),
        }
    }

    fn accepts(&self, reference: &IntentionLabel, candidate: &IntentionLabel) -> bool {
        match *self {
            MatchRule::Iou { threshold } => temporal_iou(reference, candidate) >= threshold,
            MatchRule::Onset { tolerance_ms } => {
                (reference.t_start_ms - candidate.t_start_ms).abs() <= tolerance_ms
            }
        }
    }
}

/// Intersection over union of two time windows.
pub fn temporal_iou(a: &IntentionLabel, b: &IntentionLabel) -> f64 {
    let inter = (a.t_end_ms.min(b.t_end_ms) - a.t_start_ms.max(b.t_start_ms)).max(0);
    let union = a.len_ms() + b.len_ms() - inter;
    if union <= 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassAgreement {
    pub matched: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub rule: MatchRule,
    pub matched: usize,
    pub total_reference: usize,
    pub total_candidate: usize,
    pub agreement: f64,
    pub per_class: BTreeMap<u32, ClassAgreement>,
    pub mean_onset_error_ms: f64,
}

impl AgreementReport {
    fn finish(
        rule: MatchRule,
        matched: usize,
        total_reference: usize,
        total_candidate: usize,
        per_class: BTreeMap<u32, ClassAgreement>,
        onset_error_sum: i64,
    ) -> Self {
        let agreement = match (total_reference, total_candidate) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            (r, _) => matched as f64 / r as f64,
        };
        let mean_onset_error_ms = if matched == 0 {
            0.0
        } else {
            onset_error_sum as f64 / matched as f64
        };
        AgreementReport {
            rule,
            matched,
            total_reference,
            total_candidate,
            agreement,
            per_class,
            mean_onset_error_ms,
        }
    }

    /// Pools per-recording reports scored under the same rule.
    pub fn combine(rule: MatchRule, reports: &[AgreementReport]) -> AgreementReport {
        let mut per_class: BTreeMap<u32, ClassAgreement> = BTreeMap::new();
        let mut matched = 0;
        let mut total_reference = 0;
        let mut total_candidate = 0;
        let mut onset_sum = 0.0;
        for r in reports {
            matched += r.matched;
            total_reference += r.total_reference;
            total_candidate += r.total_candidate;
            onset_sum += r.mean_onset_error_ms * r.matched as f64;
            for (c, a) in &r.per_class {
                let e = per_class.entry(*c).or_default();
                e.matched += a.matched;
                e.total += a.total;
            }
        }
        let mut out = AgreementReport::finish(
            rule,
            matched,
            total_reference,
            total_candidate,
            per_class,
            0,
        );
        if matched > 0 {
            out.mean_onset_error_ms = onset_sum / matched as f64;
        }
        out
    }
}

/// Greedy one-to-one matching in time order: each candidate, earliest first,
/// takes the earliest unmatched reference of its class that the rule accepts.
pub fn score_agreement(
    reference: &[IntentionLabel],
    candidate: &[IntentionLabel],
    rule: MatchRule,
) -> Result<AgreementReport> {
    rule.validate()?;
    let mut refs: Vec<&IntentionLabel> = reference.iter().collect();
    refs.sort_by(|a, b| a.time_cmp(b));
    let mut cands: Vec<&IntentionLabel> = candidate.iter().collect();
    cands.sort_by(|a, b| a.time_cmp(b));

    let mut taken = vec![false; refs.len()];
    let mut per_class: BTreeMap<u32, ClassAgreement> = BTreeMap::new();
    for r in &refs {
        per_class.entry(r.class_id).or_default().total += 1;
    }
    let mut matched = 0;
    let mut onset_error_sum = 0;
    for c in &cands {
        let hit = refs
            .iter()
            .enumerate()
            .find(|(i, r)| !taken[*i] && r.class_id == c.class_id && rule.accepts(r, c));
        if let Some((i, r)) = hit {
            taken[i] = true;
            matched += 1;
            onset_error_sum += (r.t_start_ms - c.t_start_ms).abs();
            per_class.entry(r.class_id).or_default().matched += 1;
        }
    }
    Ok(AgreementReport::finish(
        rule,
        matched,
        refs.len(),
        cands.len(),
        per_class,
        onset_error_sum,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[truth][predicted]`, class 0 included.
    pub counts: Vec<Vec<u64>>,
    pub accuracy: f64,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }
}

/// Builds a `num_classes x num_classes` matrix (classes `0..num_classes`).
pub fn build_confusion(truth: &[u32], predicted: &[u32], num_classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::Validation(format!(
            "truth has {} items, predictions {}",
            truth.len(),
            predicted.len()
        )));
    }
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    let mut correct = 0u64;
    for (i, (&t, &p)) in truth.iter().zip(predicted).enumerate() {
        if t as usize >= num_classes || p as usize >= num_classes {
            return Err(Error::Validation(format!(
                "item {i}: class out of range 0..{num_classes} (truth {t}, predicted {p})"
            )));
        }
        counts[t as usize][p as usize] += 1;
        if t == p {
            correct += 1;
        }
    }
    let accuracy = if truth.is_empty() {
        0.0
    } else {
        correct as f64 / truth.len() as f64
    };
    Ok(ConfusionMatrix { counts, accuracy })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSavingsReport {
    pub n_samples: u64,
    pub minutes_per_manual_label: f64,
    pub manual_hours: f64,
    pub slb_hours: f64,
    pub saved_hours: f64,
}

pub fn time_savings(
    n_samples: u64,
    minutes_per_manual_label: f64,
    slb_hours: f64,
) -> Result<TimeSavingsReport> {
    if !(minutes_per_manual_label >= 0.0) || !(slb_hours >= 0.0) {
        return Err(Error::Validation(
            "minutes per label and SLB hours must be non-negative".into(),
        ));
    }
    let manual_hours = n_samples as f64 * minutes_per_manual_label / 60.0;
    Ok(TimeSavingsReport {
        n_samples,
        minutes_per_manual_label,
        manual_hours,
        slb_hours,
        saved_hours: manual_hours - slb_hours,
    })
}

/// Detector output scored against reference state changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub max_onset_error_ms: i64,
    /// Matched detections whose class differs from the reference.
    pub class_mismatches: usize,
}

/// Greedy one-to-one matching: each detection, in time order, takes the
/// nearest unmatched reference change on the same sensor within
/// `tolerance_ms`.
pub fn score_detections(
    reference: &[ChangeRecord],
    detected: &[ChangeRecord],
    tolerance_ms: i64,
) -> DetectionScore {
    let mut used = vec![false; reference.len()];
    let mut tp = 0;
    let mut max_err = 0;
    let mut class_mismatches = 0;
    let mut order: Vec<&ChangeRecord> = detected.iter().collect();
    order.sort_by_key(|c| c.t_ms);
    for d in order {
        let best = reference
            .iter()
            .enumerate()
            .filter(|(k, r)| !used[*k] && r.sensor == d.sensor && (r.t_ms - d.t_ms).abs() <= tolerance_ms)
            .min_by_key(|(k, r)| ((r.t_ms - d.t_ms).abs(), *k));
        if let Some((k, r)) = best {
            used[k] = true;
            tp += 1;
            max_err = max_err.max((r.t_ms - d.t_ms).abs());
            if r.class_id != d.class_id {
                class_mismatches += 1;
            }
        }
    }
    let fp = detected.len() - tp;
    let fn_ = reference.len() - tp;
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    DetectionScore {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        precision,
        recall,
        f1,
        max_onset_error_ms: max_err,
        class_mismatches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::LabelSource;

    fn label(class_id: u32, start: i64) -> IntentionLabel {
        IntentionLabel::anchored(class_id, start, 4000, LabelSource::Manual)
    }

    #[test]
    fn identical_lists_agree_fully() {
        let refs: Vec<_> = (1..=13).map(|c| label(c, c as i64 * 10_000)).collect();
        let r = score_agreement(&refs, &refs, MatchRule::default()).unwrap();
        assert_eq!(r.agreement, 1.0);
        assert_eq!(r.mean_onset_error_ms, 0.0);
        assert_eq!(r.matched, 13);
    }

    #[test]
    fn shift_by_full_window_never_matches() {
        let refs = vec![label(1, 10_000)];
        let cands = vec![label(1, 14_000)];
        let r = score_agreement(&refs, &cands, MatchRule::default()).unwrap();
        assert_eq!(r.matched, 0);
        assert_eq!(r.agreement, 0.0);
    }

    #[test]
    fn onset_rule() {
        let refs = vec![label(1, 10_000)];
        let cands = vec![label(1, 10_300)];
        let rule = MatchRule::Onset { tolerance_ms: 500 };
        let r = score_agreement(&refs, &cands, rule).unwrap();
        assert_eq!(r.matched, 1);
        assert_eq!(r.mean_onset_error_ms, 300.0);
        let r = score_agreement(&refs, &cands, MatchRule::Onset { tolerance_ms: 200 }).unwrap();
        assert_eq!(r.matched, 0);
    }

    #[test]
    fn iou_values() {
        assert_eq!(temporal_iou(&label(1, 0), &label(1, 0)), 1.0);
        assert_eq!(temporal_iou(&label(1, 0), &label(1, 4000)), 0.0);
        // overlap 3000 of union 5000
        assert!((temporal_iou(&label(1, 0), &label(1, 1000)) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn invalid_rule() {
        assert!(score_agreement(&[], &[], MatchRule::Iou { threshold: 0.0 }).is_err());
        assert!(score_agreement(&[], &[], MatchRule::Iou { threshold: 1.5 }).is_err());
        assert!(score_agreement(&[], &[], MatchRule::Onset { tolerance_ms: -1 }).is_err());
    }

    #[test]
    fn combine_pools_counts() {
        let a = score_agreement(&[label(1, 0)], &[label(1, 100)], MatchRule::default()).unwrap();
        let b = score_agreement(&[label(1, 0), label(2, 8000)], &[label(1, 300)], MatchRule::default())
            .unwrap();
        let c = AgreementReport::combine(MatchRule::default(), &[a, b]);
        assert_eq!(c.matched, 2);
        assert_eq!(c.total_reference, 3);
        assert_eq!(c.per_class[&1], ClassAgreement { matched: 2, total: 2 });
        assert_eq!(c.per_class[&2], ClassAgreement { matched: 0, total: 1 });
        assert!((c.mean_onset_error_ms - 200.0).abs() < 1e-12);
    }

    #[test]
    fn confusion_identity() {
        let truth: Vec<u32> = (0..100).map(|i| i % 14).collect();
        let m = build_confusion(&truth, &truth, 14).unwrap();
        assert_eq!(m.accuracy, 1.0);
        for (i, row) in m.counts.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i != j {
                    assert_eq!(v, 0);
                }
            }
        }
    }

    #[test]
    fn confusion_constant_prediction() {
        let truth: Vec<u32> = (0..1400).map(|i| i % 14).collect();
        let pred = vec![0u32; 1400];
        let m = build_confusion(&truth, &pred, 14).unwrap();
        assert!((m.accuracy - 1.0 / 14.0).abs() < 1e-12);
        assert_eq!(m.row_sums(), vec![100; 14]);
    }

    #[test]
    fn confusion_errors() {
        assert!(build_confusion(&[1, 2], &[1], 14).is_err());
        assert!(build_confusion(&[14], &[0], 14).is_err());
    }

    #[test]
    fn time_report_examples() {
        let r = time_savings(201, 30.0, 0.5).unwrap();
        assert!((r.manual_hours - 100.5).abs() < 1e-12);
        assert!((r.saved_hours - 100.0).abs() < 1e-12);
        let r = time_savings(0, 30.0, 0.0).unwrap();
        assert_eq!((r.manual_hours, r.saved_hours), (0.0, 0.0));
        let r = time_savings(10, 6.0, 0.0).unwrap();
        assert!((r.manual_hours - 1.0).abs() < 1e-12);
        assert!(time_savings(1, -1.0, 0.0).is_err());
    }
}
