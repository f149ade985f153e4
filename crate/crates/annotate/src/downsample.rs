use serde::{Deserialize, Serialize};
use slb_core::model::Sample;

/// Extremes of a run of consecutive samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub t_start_ms: i64,
    pub t_end_ms: i64,
    pub min: f64,
    pub max: f64,
}

/// Splits `samples` into `points` contiguous buckets of near-equal size and
/// keeps each bucket's min and max, so no spike disappears. With
/// `points >= len` every sample is its own bucket.
pub fn downsample_min_max(samples: &[Sample], points: usize) -> Vec<Bucket> {
    let n = samples.len();
    if points == 0 || n == 0 {
        return Vec::new();
    }
    let buckets = points.min(n);
    (0..buckets)
        .map(|b| {
            let chunk = &samples[b * n / buckets..(b + 1) * n / buckets];
            let (min, max) = chunk
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.grams), hi.max(s.grams)));
            Bucket {
                t_start_ms: chunk[0].t_ms,
                t_end_ms: chunk[chunk.len() - 1].t_ms,
                min,
                max,
            }
        })
        .collect()
}
