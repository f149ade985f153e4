//! Results checked against independently computed references: a maximum
//! bipartite matching, an exact binomial interval, and generator ground
//! truth.

use proptest::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};
use slb_core::detect::{detect_state_changes, ChangeRecord, DetectorConfig};
use slb_core::eval::{build_confusion, score_agreement, temporal_iou, time_savings, MatchRule};
use slb_core::labels::{IntentionLabel, LabelSource};
use slb_core::metrics::compute_annotation_metrics;
use slb_core::rng::PortableRng;
use slb_core::slb::{fit_itm, pair_labels_to_changes};
use slb_core::synthgen::{generate_recording, ScenarioConfig};

const D: i64 = 4000;

/// Maximum bipartite matching by augmenting paths.
fn max_matching(reference: &[IntentionLabel], candidate: &[IntentionLabel], threshold: f64) -> usize {
    let edges: Vec<Vec<usize>> = candidate
        .iter()
        .map(|c| {
            reference
                .iter()
                .enumerate()
                .filter(|(_, r)| r.class_id == c.class_id && temporal_iou(r, c) >= threshold)
                .map(|(k, _)| k)
                .collect()
        })
        .collect();
    fn augment(u: usize, edges: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &v in &edges[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if owner[v].is_none_or(|o| augment(o, edges, seen, owner)) {
                owner[v] = Some(u);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; reference.len()];
    (0..candidate.len())
        .filter(|&u| augment(u, &edges, &mut vec![false; reference.len()], &mut owner))
        .count()
}

#[test]
fn two_class_swaps_in_twenty() {
    let reference: Vec<IntentionLabel> = (0..20)
        .map(|k| IntentionLabel::anchored(1 + (k % 13) as u32, 10_000 * k as i64, D, LabelSource::Manual))
        .collect();
    let mut candidate: Vec<IntentionLabel> = reference
        .iter()
        .map(|l| IntentionLabel { source: LabelSource::Slb, ..l.clone() })
        .collect();
    candidate[4].class_id = 9;
    candidate[15].class_id = 1;
    let report = score_agreement(&reference, &candidate, MatchRule::default()).unwrap();
    let oracle = max_matching(&reference, &candidate, 0.5);
    assert_eq!(oracle, 18);
    assert_eq!(report.matched, oracle);
    assert!((report.agreement - 0.90).abs() < 1e-12);
}

proptest! {
    #[test]
    fn greedy_equals_maximum_matching(
        slots in prop::collection::btree_set((1u32..4, 0i64..40), 0..30),
        shifts in prop::collection::vec((-2500i64..2500, 0u32..5), 30),
    ) {
        let reference: Vec<IntentionLabel> = slots
            .iter()
            .map(|(c, s)| IntentionLabel::anchored(*c, 5000 * s, D, LabelSource::Manual))
            .collect();
        // Candidates: shifted copies, some relabelled; kept non-overlapping
        // per class by dropping collisions.
        let mut candidate: Vec<IntentionLabel> = Vec::new();
        for (l, (dt, relabel)) in reference.iter().zip(&shifts) {
            let class_id = if *relabel == 0 { l.class_id % 3 + 1 } else { l.class_id };
            let c = IntentionLabel::anchored(class_id, (l.t_start_ms + dt).max(0), D, LabelSource::Slb);
            if !candidate.iter().any(|o| o.class_id == c.class_id && o.overlaps(&c)) {
                candidate.push(c);
            }
        }
        for threshold in [0.3, 0.5, 0.8] {
            let r = score_agreement(&reference, &candidate, MatchRule::Iou { threshold }).unwrap();
            prop_assert_eq!(r.matched, max_matching(&reference, &candidate, threshold));
        }
    }
}

/// Central interval `[lo, hi]` of Binomial(n, p) holding at least `level`.
fn binomial_interval(n: u64, p: f64, level: f64) -> (u64, u64) {
    let dist = Binomial::new(p, n).unwrap();
    let tail = (1.0 - level) / 2.0;
    (dist.inverse_cdf(tail), dist.inverse_cdf(1.0 - tail))
}

#[test]
fn binomial_interval_sanity() {
    // Normal approximation: 8300 +- 2.5758 * sqrt(10000 * 0.83 * 0.17) = 8300 +- 96.8
    let (lo, hi) = binomial_interval(10_000, 0.83, 0.99);
    assert!((8200..=8205).contains(&lo), "{lo}");
    assert!((8395..=8400).contains(&hi), "{hi}");
}

#[test]
fn confusion_accuracy_within_binomial_interval() {
    let n = 10_000u64;
    let p = 0.83;
    let (lo, hi) = binomial_interval(n, p, 0.99);
    assert!(lo as f64 / n as f64 >= p - 0.02 && hi as f64 / n as f64 <= p + 0.02);

    let mut rng = PortableRng::new(7);
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for _ in 0..n {
        let t = rng.int_range(0, 13) as u32;
        let guess = if rng.bernoulli(p) {
            t
        } else {
            (t + rng.int_range(1, 13) as u32) % 14
        };
        truth.push(t);
        pred.push(guess);
    }
    let m = build_confusion(&truth, &pred, 14).unwrap();
    let correct = (m.accuracy * n as f64).round() as u64;
    assert!((lo..=hi).contains(&correct), "{correct} outside [{lo}, {hi}]");
}

#[test]
fn time_savings_reported_figures() {
    let r = time_savings(201, 30.0, 0.5).unwrap();
    assert!((r.manual_hours - 100.5).abs() < 1e-9);
    assert!((r.saved_hours - 100.0).abs() < 1e-9);
}

#[test]
fn metrics_match_generator_gaps() {
    let cfg = ScenarioConfig::default();
    for index in 0..5 {
        let (rec, truth) = generate_recording(&cfg, index).unwrap();
        let m = compute_annotation_metrics(rec.duration_ms, &truth.true_labels, &truth.true_state_changes).unwrap();
        assert!(m.anomalies.is_empty());
        assert_eq!(m.post_intention_padding_ms, truth.true_taus);
        assert_eq!(m.pre_intention_padding_ms, truth.pre_padding_ms);
        let gaps: Vec<i64> = truth.true_state_changes.windows(2).map(|p| p[1].t_ms - p[0].t_ms).collect();
        assert_eq!(m.intervals_between_states_ms, gaps);
        assert_eq!(m.state_durations_ms.iter().sum::<i64>(), rec.duration_ms);
    }
}

fn detected(cfg: &ScenarioConfig, index: usize) -> (slb_core::synthgen::GroundTruth, Vec<ChangeRecord>) {
    let (rec, truth) = generate_recording(cfg, index).unwrap();
    let found = detect_state_changes(&rec, &cfg.catalog, &DetectorConfig::default())
        .unwrap()
        .iter()
        .map(|c| c.record())
        .collect();
    (truth, found)
}

#[test]
fn pairing_matches_generator_association() {
    let cfg = ScenarioConfig::default();
    for index in 0..5 {
        let (truth, found) = detected(&cfg, index);
        let pairing = pair_labels_to_changes(&truth.true_labels, &found);
        assert_eq!(pairing.pairs.len(), truth.pairing.len());
        for &(li, ci) in &truth.pairing {
            let label = &truth.true_labels[li];
            let (_, change) = pairing.pairs.iter().find(|(l, _)| l == label).unwrap();
            assert!((change.t_ms - truth.true_state_changes[ci].t_ms).abs() <= 300);
            assert_eq!(change.class_id, truth.true_state_changes[ci].class_id);
        }
    }
}

#[test]
fn clean_onsets_within_one_sample() {
    // Symmetric smoothing puts the midpoint crossing of a clean step on the
    // step itself, so fitted taus are exact to one sample period.
    let cfg = ScenarioConfig::default().clean();
    for index in 0..5 {
        let (truth, found) = detected(&cfg, index);
        assert_eq!(found.len(), truth.true_state_changes.len());
        for (f, t) in found.iter().zip(&truth.true_state_changes) {
            assert!((f.t_ms - t.t_ms).abs() <= 20, "{} vs {}", f.t_ms, t.t_ms);
        }
        let pairs = pair_labels_to_changes(&truth.true_labels, &found).pairs;
        let itm = fit_itm(&pairs, D).unwrap().model;
        for (label, tau) in truth.true_labels.iter().zip(&truth.true_taus) {
            assert!((itm.tau_for(label.class_id) - tau).abs() <= 20);
        }
    }
}
