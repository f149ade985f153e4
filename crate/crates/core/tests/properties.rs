use std::collections::BTreeMap;

use proptest::prelude::*;
use slb_core::catalog::PartCatalog;
use slb_core::detect::{detect_stream, smooth_values, ChangeRecord, DetectorConfig};
use slb_core::eval::{build_confusion, score_agreement, MatchRule};
use slb_core::labels::{validate_labels, IntentionLabel, LabelSource};
use slb_core::model::{align_recording, parse_sensor_stream, FrameEntry, FrameIndex, Sample, SensorStream};
use slb_core::rng::PortableRng;
use slb_core::slb::{extract_negative_windows, fit_itm, generate_self_labels};

const D: i64 = 4000;

fn empty_catalog() -> PartCatalog {
    PartCatalog::new(vec![]).unwrap()
}

/// Piecewise-constant signal at 50 Hz with Gaussian noise.
fn staircase(start_t: i64, base: f64, steps: &[(usize, f64)], n: usize, sigma: f64, seed: u64) -> SensorStream {
    let mut rng = PortableRng::new(seed);
    let samples = (0..n)
        .map(|k| {
            let level: f64 = base + steps.iter().filter(|(at, _)| k >= *at).map(|(_, d)| d).sum::<f64>();
            Sample {
                t_ms: start_t + 20 * k as i64,
                grams: level + sigma * rng.normal(),
            }
        })
        .collect();
    SensorStream::new("wood", samples)
}

fn step_plan() -> impl Strategy<Value = Vec<(usize, f64)>> {
    // Steps at least 200 samples (4 s) apart, magnitudes 30..150 g either way.
    prop::collection::vec((0usize..3, 30.0f64..150.0, any::<bool>()), 1..5).prop_map(|raw| {
        let mut at = 150;
        raw.into_iter()
            .map(|(extra, mag, up)| {
                at += 200 + 50 * extra;
                (at, if up { mag } else { -mag })
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ingestion_is_idempotent(
        raw in prop::collection::vec((0i64..100_000, -1e4f64..1e4), 1..200),
    ) {
        let dir = tempfile::tempdir().unwrap();
        // Unique timestamps; the generator may repeat one.
        let mut seen = std::collections::BTreeSet::new();
        let samples: Vec<Sample> = raw
            .into_iter()
            .filter(|(t, _)| seen.insert(*t))
            .map(|(t_ms, grams)| Sample { t_ms, grams })
            .collect();
        let first_path = dir.path().join("a.jsonl");
        std::fs::write(&first_path, SensorStream::new("s", samples).to_jsonl().unwrap()).unwrap();
        let once = parse_sensor_stream(&first_path, "s").unwrap();
        let second_path = dir.path().join("b.jsonl");
        std::fs::write(&second_path, once.to_jsonl().unwrap()).unwrap();
        let twice = parse_sensor_stream(&second_path, "s").unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.samples.windows(2).all(|p| p[0].t_ms < p[1].t_ms));
    }

    #[test]
    fn alignment_preserves_differences(
        offsets in prop::collection::vec(0i64..1_000_000_000, 2..4),
        frame_offset in 0i64..1_000_000_000,
        len in 2usize..50,
    ) {
        let streams: Vec<SensorStream> = offsets
            .iter()
            .enumerate()
            .map(|(k, off)| {
                let samples = (0..len)
                    .map(|j| Sample { t_ms: off + 17 * j as i64 + k as i64, grams: j as f64 })
                    .collect();
                SensorStream::new(format!("s{k}"), samples)
            })
            .collect();
        let frames = FrameIndex::new(
            (0..len as u64).map(|f| FrameEntry { t_ms: frame_offset + 33 * f as i64, frame_no: f }).collect(),
        )
        .unwrap();
        let mut all_before: Vec<i64> = streams.iter().flat_map(|s| s.times()).collect();
        all_before.extend(frames.entries.iter().map(|e| e.t_ms));

        let aligned = align_recording("r", streams, frames).unwrap().recording;
        let mut all_after: Vec<i64> = aligned.streams.values().flat_map(|s| s.times()).collect();
        all_after.extend(aligned.frames.entries.iter().map(|e| e.t_ms));

        prop_assert_eq!(*all_after.iter().min().unwrap(), 0);
        prop_assert_eq!(*all_after.iter().max().unwrap(), aligned.duration_ms);
        for a in 0..all_before.len() {
            for b in [0, all_before.len() / 2, all_before.len() - 1] {
                prop_assert_eq!(all_before[a] - all_before[b], all_after[a] - all_after[b]);
            }
        }
    }

    #[test]
    fn detector_translation_equivariant(
        steps in step_plan(),
        shift in 0i64..10_000_000,
        seed in any::<u64>(),
    ) {
        let cfg = DetectorConfig::default();
        let a = staircase(0, 1000.0, &steps, 1600, 2.0, seed);
        let b = staircase(shift, 1000.0, &steps, 1600, 2.0, seed);
        let ca = detect_stream(&a, &empty_catalog(), &cfg).unwrap();
        let cb = detect_stream(&b, &empty_catalog(), &cfg).unwrap();
        prop_assert_eq!(ca.len(), cb.len());
        for (x, y) in ca.iter().zip(&cb) {
            prop_assert_eq!(x.t_ms + shift, y.t_ms);
            prop_assert!((x.delta_g - y.delta_g).abs() < 1e-9);
        }
    }

    #[test]
    fn detector_offset_invariant(
        steps in step_plan(),
        offset in -500.0f64..500.0,
        seed in any::<u64>(),
    ) {
        let cfg = DetectorConfig::default();
        let a = staircase(0, 1000.0, &steps, 1600, 2.0, seed);
        let b = staircase(0, 1000.0 + offset, &steps, 1600, 2.0, seed);
        let ca = detect_stream(&a, &empty_catalog(), &cfg).unwrap();
        let cb = detect_stream(&b, &empty_catalog(), &cfg).unwrap();
        prop_assert_eq!(ca.len(), cb.len());
        for (x, y) in ca.iter().zip(&cb) {
            prop_assert_eq!(x.t_ms, y.t_ms);
            prop_assert!((x.delta_g - y.delta_g).abs() < 1e-6);
        }
    }

    #[test]
    fn detector_output_invariants(steps in step_plan(), seed in any::<u64>()) {
        let cfg = DetectorConfig::default();
        let s = staircase(0, 1000.0, &steps, 1600, 2.0, seed);
        let changes = detect_stream(&s, &empty_catalog(), &cfg).unwrap();
        for c in &changes {
            prop_assert!(c.delta_g.abs() >= cfg.threshold_g);
            prop_assert!((c.post_level_g - c.pre_level_g - c.delta_g).abs() < 1e-12);
        }
        for p in changes.windows(2) {
            prop_assert!(p[1].t_ms - p[0].t_ms >= cfg.refractory_ms);
        }
    }

    #[test]
    fn clean_steps_complete(steps in step_plan()) {
        // Steps of at least 2 thresholds, at least 2 refractory periods apart.
        let cfg = DetectorConfig::default();
        let s = staircase(0, 1000.0, &steps, 1600, 0.0, 0);
        let changes = detect_stream(&s, &empty_catalog(), &cfg).unwrap();
        prop_assert_eq!(changes.len(), steps.len());
        let window_ms = cfg.smooth_window as i64 * 20;
        for (c, (at, mag)) in changes.iter().zip(&steps) {
            prop_assert!((c.t_ms - 20 * *at as i64).abs() <= window_ms);
            prop_assert!((c.delta_g - mag).abs() < 1e-9);
        }
    }

    #[test]
    fn smoothing_preserves_mean_with_level_edges(
        level in -1e3f64..1e3,
        inner in prop::collection::vec(-1e3f64..1e3, 0..200),
        half in 0usize..10,
    ) {
        // Truncated edge windows are exact when the first and last 2*half
        // samples share one level.
        let w = 2 * half + 1;
        let mut v = vec![level; 2 * half];
        v.extend(inner);
        v.extend(vec![level; 2 * half]);
        if v.is_empty() {
            v.push(level);
        }
        let out = smooth_values(&v, w).unwrap();
        let m_in = v.iter().sum::<f64>() / v.len() as f64;
        let m_out = out.iter().sum::<f64>() / v.len() as f64;
        prop_assert!((m_in - m_out).abs() < 1e-9, "{} vs {}", m_in, m_out);
    }

    #[test]
    fn fit_itm_permutation_invariant(
        gaps in prop::collection::vec((1u32..6, 0i64..6000), 1..40),
        seed in any::<u64>(),
    ) {
        let pairs: Vec<(IntentionLabel, ChangeRecord)> = gaps
            .iter()
            .enumerate()
            .map(|(k, (class_id, gap))| {
                let l = IntentionLabel::anchored(*class_id, 20_000 * k as i64, D, LabelSource::Manual);
                let c = ChangeRecord { t_ms: l.t_end_ms + gap, sensor: "wood".into(), delta_g: -50.0, class_id: Some(*class_id) };
                (l, c)
            })
            .collect();
        let mut shuffled = pairs.clone();
        let mut rng = PortableRng::new(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.index(i + 1));
        }
        prop_assert_eq!(fit_itm(&pairs, D).unwrap().model, fit_itm(&shuffled, D).unwrap().model);
    }

    #[test]
    fn self_labels_round_trip(
        plan in prop::collection::vec((1u32..8, 0i64..4000), 1..20),
        taus in prop::collection::vec(0i64..3000, 8),
    ) {
        // Manual labels produced with a constant tau per class and changes at
        // exact onsets are reproduced exactly.
        let mut t = 1000;
        let mut manual = Vec::new();
        let mut changes = Vec::new();
        for (class_id, pad) in &plan {
            let start = t + pad;
            let label = IntentionLabel::anchored(*class_id, start, D, LabelSource::Manual);
            let change_t = label.t_end_ms + taus[*class_id as usize];
            changes.push(ChangeRecord { t_ms: change_t, sensor: "wood".into(), delta_g: -50.0, class_id: Some(*class_id) });
            manual.push(label);
            t = change_t;
        }
        let pairs: Vec<_> = manual.iter().cloned().zip(changes.iter().cloned()).collect();
        let itm = fit_itm(&pairs, D).unwrap().model;
        let out = generate_self_labels(&changes, &itm).unwrap();
        prop_assert!(out.dropped.is_empty());
        let strip = |ls: &[IntentionLabel]| ls.iter().map(|l| (l.class_id, l.t_start_ms, l.t_end_ms)).collect::<Vec<_>>();
        prop_assert_eq!(strip(&out.labels), strip(&manual));
        validate_labels(&out.labels, t, D).unwrap();
    }

    #[test]
    fn self_labels_always_valid(
        raw in prop::collection::vec((0i64..200_000, 1u32..14), 0..40),
        tau in 0i64..5000,
    ) {
        let mut changes: Vec<ChangeRecord> = raw
            .into_iter()
            .map(|(t_ms, c)| ChangeRecord { t_ms, sensor: "wood".into(), delta_g: -50.0, class_id: Some(c) })
            .collect();
        changes.sort_by_key(|c| c.t_ms);
        let itm = fit_itm(
            &[(IntentionLabel::anchored(1, 0, D, LabelSource::Manual), ChangeRecord { t_ms: D + tau, sensor: "wood".into(), delta_g: -1.0, class_id: Some(1) })],
            D,
        )
        .unwrap()
        .model;
        let out = generate_self_labels(&changes, &itm).unwrap();
        validate_labels(&out.labels, 200_000, D).unwrap();
        prop_assert_eq!(out.labels.len() + out.dropped.len(), changes.len());
    }

    #[test]
    fn negatives_avoid_widened_labels(
        starts in prop::collection::vec((0i64..100_000, 1u32..6), 0..12),
        per_class in 0usize..5,
        margin in 0i64..3000,
        seed in any::<u64>(),
    ) {
        let labels: Vec<IntentionLabel> = starts
            .iter()
            .map(|(s, c)| IntentionLabel::anchored(*c, *s, D, LabelSource::Manual))
            .collect();
        let out = extract_negative_windows("r", 120_000, &labels, D, per_class, margin, seed);
        prop_assert_eq!(out.windows.len() + out.shortfall, out.requested);
        for w in &out.windows {
            prop_assert_eq!(w.t_end_ms - w.t_start_ms, D);
            prop_assert!(w.t_start_ms >= 0 && w.t_end_ms <= 120_000);
            for l in &labels {
                let (s, e) = (l.t_start_ms - margin, l.t_end_ms + margin);
                prop_assert!(w.t_end_ms <= s || w.t_start_ms >= e, "{:?} hits {:?}", w, l);
            }
        }
        for p in out.windows.windows(2) {
            prop_assert!(p[0].t_end_ms <= p[1].t_start_ms);
        }
    }

    #[test]
    fn agreement_symmetric_and_monotone(
        refs in prop::collection::vec((1u32..4, 0usize..30), 0..20),
        shifts in prop::collection::vec(-3000i64..3000, 20),
        t1 in 0.05f64..1.0,
        t2 in 0.05f64..1.0,
    ) {
        // Same-class labels sit on a 10 s grid, so they never overlap.
        let mut slots = BTreeMap::new();
        for (c, slot) in refs {
            slots.insert((c, slot), ());
        }
        let reference: Vec<IntentionLabel> = slots
            .keys()
            .map(|(c, slot)| IntentionLabel::anchored(*c, 10_000 * *slot as i64 + 5000, D, LabelSource::Manual))
            .collect();
        let candidate: Vec<IntentionLabel> = reference
            .iter()
            .zip(&shifts)
            .map(|(l, s)| IntentionLabel::anchored(l.class_id, l.t_start_ms + s, D, LabelSource::Slb))
            .collect();
        let rule = MatchRule::Iou { threshold: 0.5 };
        let ab = score_agreement(&reference, &candidate, rule).unwrap();
        let ba = score_agreement(&candidate, &reference, rule).unwrap();
        prop_assert_eq!(ab.matched, ba.matched);
        prop_assert_eq!(ab.total_reference, ba.total_candidate);
        prop_assert_eq!(ab.total_candidate, ba.total_reference);
        prop_assert!(ab.matched <= ab.total_reference.min(ab.total_candidate));

        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a_lo = score_agreement(&reference, &candidate, MatchRule::Iou { threshold: lo }).unwrap();
        let a_hi = score_agreement(&reference, &candidate, MatchRule::Iou { threshold: hi }).unwrap();
        prop_assert!(a_hi.agreement <= a_lo.agreement);
    }

    #[test]
    fn confusion_row_sums(pairs in prop::collection::vec((0u32..14, 0u32..14), 1..300)) {
        let truth: Vec<u32> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<u32> = pairs.iter().map(|p| p.1).collect();
        let m = build_confusion(&truth, &pred, 14).unwrap();
        let rows = m.row_sums();
        for c in 0..14u32 {
            prop_assert_eq!(rows[c as usize], truth.iter().filter(|t| **t == c).count() as u64);
        }
        let trace: u64 = (0..14).map(|i| m.counts[i][i]).sum();
        prop_assert!((m.accuracy - trace as f64 / truth.len() as f64).abs() < 1e-15);
    }
}
