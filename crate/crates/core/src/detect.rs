//! State-change detection on weight streams.
//!
//! Each stream is optionally normalized, smoothed with a centered moving
//! average, then scanned for level shifts. A shift is a candidate when the
//! mean of the `lookahead` samples after index `i` differs from the mean of
//! the `smooth_window` samples ending at `i` by at least the threshold. The
//! candidate anchors its pre-level there and is confirmed once a lookahead
//! window settles (every sample within `sustain_epsilon_g` of the window
//! mean) at a level still at least a threshold away from the anchor. A
//! disturbance that settles back near the anchor, or never settles, is
//! dropped. The onset is the first sample crossing the midpoint between the
//! two levels.
//!
//! Confirmed shifts closer than `refractory_ms` on one sensor merge into the
//! earlier one, and every surviving shift is matched against the part
//! catalog.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::PartCatalog;
use crate::error::{Error, Result};
use crate::io;
use crate::model::{Recording, SensorStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    None,
    Zscore,
    Minmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Odd number of samples in the smoothing and pre-level windows.
    pub smooth_window: usize,
    /// Minimum level shift, in grams (or normalized units when normalizing).
    pub threshold_g: f64,
    /// Samples that must hold the new level.
    pub lookahead: usize,
    pub sustain_epsilon_g: f64,
    pub refractory_ms: i64,
    pub normalization: Normalization,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            smooth_window: 15,
            threshold_g: 15.0,
            lookahead: 25,
            sustain_epsilon_g: 8.0,
            refractory_ms: 1500,
            normalization: Normalization::None,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.smooth_window == 0 || self.smooth_window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "smooth_window must be odd and >= 1, got {}",
                self.smooth_window
            )));
        }
        if self.lookahead == 0 {
            return Err(Error::Config("lookahead must be >= 1".into()));
        }
        if !(self.threshold_g > 0.0) {
            return Err(Error::Config("threshold_g must be > 0".into()));
        }
        if !(self.sustain_epsilon_g > 0.0) {
            return Err(Error::Config("sustain_epsilon_g must be > 0".into()));
        }
        if self.refractory_ms < 0 {
            return Err(Error::Config("refractory_ms must be >= 0".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: DetectorConfig = io::read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Minimum samples a stream needs before it can be scanned.
    pub fn min_samples(&self) -> usize {
        2 * (self.smooth_window + self.lookahead)
    }
}

/// A confirmed, sustained weight-level shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateChange {
    pub t_ms: i64,
    pub sensor_id: String,
    pub delta_g: f64,
    pub class_id: Option<u32>,
    pub pre_level_g: f64,
    pub post_level_g: f64,
}

impl StateChange {
    pub fn record(&self) -> ChangeRecord {
        ChangeRecord {
            t_ms: self.t_ms,
            sensor: self.sensor_id.clone(),
            delta_g: self.delta_g,
            class_id: self.class_id,
        }
    }
}

/// One line of a state-change report. This is all the labeling stages need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeRecord {
    pub t_ms: i64,
    pub sensor: String,
    pub delta_g: f64,
    pub class_id: Option<u32>,
}

pub fn write_change_report(path: &Path, changes: &[ChangeRecord]) -> Result<()> {
    io::write_jsonl(path, changes)
}

pub fn read_change_report(path: &Path) -> Result<Vec<ChangeRecord>> {
    let mut records: Vec<ChangeRecord> = io::read_jsonl(path)?
        .into_iter()
        .map(|(_, r)| r)
        .collect();
    records.sort_by_key(|r| r.t_ms);
    Ok(records)
}

/// `<dir>/<recording_id>.changes.jsonl`
pub fn change_report_path(dir: &Path, recording_id: &str) -> std::path::PathBuf {
    dir.join(format!("{recording_id}.changes.jsonl"))
}

/// Affine map applied by a normalization: `normalized = (g - offset) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Affine {
    offset: f64,
    scale: f64,
}

fn normalization_params(values: &[f64], mode: Normalization, sensor_id: &str) -> Result<Affine> {
    if values.is_empty() {
        return Err(Error::Empty(format!("stream {sensor_id} is empty")));
    }
    let n = values.len() as f64;
    Ok(match mode {
        Normalization::None => Affine {
            offset: 0.0,
            scale: 1.0,
        },
        Normalization::Zscore => {
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if var <= 0.0 {
                return Err(Error::Validation(format!(
                    "stream {sensor_id} has zero variance; z-score undefined"
                )));
            }
            Affine {
                offset: mean,
                scale: var.sqrt(),
            }
        }
        Normalization::Minmax => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            // A constant stream maps to all zeros.
            let scale = if hi > lo { hi - lo } else { 0.0 };
            Affine { offset: lo, scale }
        }
    })
}

fn apply(values: &[f64], a: Affine) -> Vec<f64> {
    if a.scale == 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - a.offset) / a.scale).collect()
}

/// Rescales a stream. Z-score uses the population standard deviation.
pub fn normalize(stream: &SensorStream, mode: Normalization) -> Result<SensorStream> {
    let values = stream.values();
    let a = normalization_params(&values, mode, &stream.sensor_id)?;
    Ok(stream.with_values(&apply(&values, a)))
}

/// Centered moving average; windows are truncated at the edges.
pub fn smooth_values(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "smoothing window must be odd and >= 1, got {window}"
        )));
    }
    let half = window / 2;
    let n = values.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            mean(&values[lo..=hi])
        })
        .collect())
}

pub fn smooth(stream: &SensorStream, window: usize) -> Result<SensorStream> {
    Ok(stream.with_values(&smooth_values(&stream.values(), window)?))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// A level shift in sample-index space, before merging and classification.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Shift {
    onset: usize,
    /// Onset of the last shift merged into this one.
    last_onset: usize,
    pre: f64,
    post: f64,
}

/// Mean of the window and whether every sample lies within `eps` of it.
fn settled(window: &[f64], eps: f64) -> (f64, bool) {
    let m = mean(window);
    (m, window.iter().all(|v| (v - m).abs() <= eps))
}

fn find_shifts(values: &[f64], cfg: &DetectorConfig) -> Vec<Shift> {
    let w = cfg.smooth_window;
    let l = cfg.lookahead;
    let n = values.len();
    let thr = cfg.threshold_g;
    let max_settle = w + 2 * l;
    let mut shifts = Vec::new();

    // The anchor follows settled pre windows, but only within half a
    // threshold of the last confirmed level; it moves further only through a
    // confirmed change. A smoothed spike can look settled and must not pose
    // as a level.
    let mut base: Option<f64> = None;
    let mut anchor: Option<f64> = None;
    let mut i = w - 1;
    while i + l < n {
        let (pre_now, pre_ok) = settled(&values[i + 1 - w..=i], cfg.sustain_epsilon_g);
        if pre_ok && base.is_none_or(|b| (pre_now - b).abs() < 0.5 * thr) {
            base.get_or_insert(pre_now);
            anchor = Some(pre_now);
        }
        let Some(pre) = anchor else {
            i += 1;
            continue;
        };
        let post = mean(&values[i + 1..=i + l]);
        if (post - pre).abs() < thr {
            i += 1;
            continue;
        }

        let mut outcome = None;
        let mut j = i;
        while j + l < n && j <= i + max_settle {
            let (level, ok) = settled(&values[j + 1..=j + l], cfg.sustain_epsilon_g);
            if ok {
                outcome = Some((j, level));
                break;
            }
            j += 1;
        }

        match outcome {
            Some((j, level)) if (level - pre).abs() >= thr => {
                // The first settled window may still hold the tail of the
                // smoothing ramp; a window one smoothing width later is clear
                // of it.
                let later = (j + w).min(n - 1 - l);
                let (refined, ok) = settled(&values[later + 1..=later + l], cfg.sustain_epsilon_g);
                let level = if ok && (refined - level).abs() <= cfg.sustain_epsilon_g {
                    refined
                } else {
                    level
                };
                let mid = 0.5 * (pre + level);
                let dir = (level - pre).signum();
                // The settled window has a sample on the far side of its own
                // mean, so the crossing always exists.
                let onset = (i + 1..=j + l)
                    .find(|&m| (values[m] - mid) * dir >= 0.0)
                    .unwrap_or(j + 1);
                shifts.push(Shift {
                    onset,
                    last_onset: onset,
                    pre,
                    post: level,
                });
                base = Some(level);
                anchor = Some(level);
                i = j + w;
            }
            // Settled back near the anchor: a transient. Restart with a pre
            // window that lies inside the settled stretch.
            Some((j, _)) => i = j + w,
            None => i += 1,
        }
    }
    shifts
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Re-estimates each change's levels as medians of the unsmoothed signal
/// over up to two lookahead lengths on either side, clear of the smoothing
/// ramp and of neighbouring changes. Window means are biased by a spike
/// that lands next to a step; the median is not, as long as the spike covers
/// under half the window. Changes that fall below the threshold are dropped.
fn refine_levels(raw: &[f64], merged: &mut Vec<(i64, Shift)>, cfg: &DetectorConfig) {
    let w = cfg.smooth_window;
    let span = 2 * cfg.lookahead;
    let n = raw.len();
    let onsets: Vec<(usize, usize)> = merged.iter().map(|(_, s)| (s.onset, s.last_onset)).collect();
    for (k, (_, shift)) in merged.iter_mut().enumerate() {
        let floor = if k == 0 { 0 } else { onsets[k - 1].1 + w };
        let pre_end = shift.onset.saturating_sub(w);
        let pre_start = pre_end.saturating_sub(span).max(floor);
        let ceil = onsets.get(k + 1).map_or(n, |o| o.0.saturating_sub(w));
        let post_start = (shift.last_onset + w).min(n);
        let post_end = (post_start + span).min(ceil);
        if pre_end >= pre_start + cfg.lookahead {
            shift.pre = median(&raw[pre_start..pre_end]);
        }
        if post_end >= post_start + cfg.lookahead {
            shift.post = median(&raw[post_start..post_end]);
        }
    }
    merged.retain(|(_, s)| (s.post - s.pre).abs() >= cfg.threshold_g);
}

/// Runs detection on one stream.
pub fn detect_stream(
    stream: &SensorStream,
    catalog: &PartCatalog,
    cfg: &DetectorConfig,
) -> Result<Vec<StateChange>> {
    cfg.validate()?;
    if stream.len() < cfg.min_samples() {
        return Err(Error::StreamTooShort {
            sensor_id: stream.sensor_id.clone(),
            len: stream.len(),
            required: cfg.min_samples(),
        });
    }
    let raw = stream.values();
    let affine = normalization_params(&raw, cfg.normalization, &stream.sensor_id)?;
    let unsmoothed = apply(&raw, affine);
    let values = smooth_values(&unsmoothed, cfg.smooth_window)?;
    let times = stream.times();

    let mut merged: Vec<(i64, Shift)> = Vec::new();
    for shift in find_shifts(&values, cfg) {
        let t = times[shift.onset];
        match merged.last_mut() {
            Some((t_prev, prev)) if t - *t_prev < cfg.refractory_ms => {
                prev.post = shift.post;
                prev.last_onset = shift.last_onset;
                if (prev.post - prev.pre).abs() < cfg.threshold_g {
                    // Put back within the refractory period: no net change.
                    merged.pop();
                }
            }
            _ => merged.push((t, shift)),
        }
    }

    refine_levels(&unsmoothed, &mut merged, cfg);

    let to_grams = |v: f64| {
        if cfg.normalization == Normalization::None {
            v
        } else {
            v * affine.scale + affine.offset
        }
    };
    Ok(merged
        .into_iter()
        .map(|(t_ms, s)| {
            let pre_level_g = to_grams(s.pre);
            let post_level_g = to_grams(s.post);
            let delta_g = post_level_g - pre_level_g;
            StateChange {
                t_ms,
                sensor_id: stream.sensor_id.clone(),
                delta_g,
                class_id: catalog.classify(&stream.sensor_id, delta_g),
                pre_level_g,
                post_level_g,
            }
        })
        .collect())
}

/// Detects state changes on every stream of a recording, sorted by time.
pub fn detect_state_changes(
    recording: &Recording,
    catalog: &PartCatalog,
    cfg: &DetectorConfig,
) -> Result<Vec<StateChange>> {
    let mut out = Vec::new();
    for stream in recording.streams.values() {
        out.extend(detect_stream(stream, catalog, cfg)?);
    }
    // Streams iterate in sensor order, so the stable sort keeps ties ordered.
    out.sort_by_key(|c| c.t_ms);
    Ok(out)
}
