//! Timestamped sensor streams, frame indexes and aligned recordings.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

/// One weight reading, milliseconds since the recording epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t_ms: i64,
    pub grams: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorStream {
    pub sensor_id: String,
    pub samples: Vec<Sample>,
}

impl SensorStream {
    pub fn new(sensor_id: impl Into<String>, samples: Vec<Sample>) -> Self {
        SensorStream {
            sensor_id: sensor_id.into(),
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<i64> {
        self.samples.iter().map(|s| s.t_ms).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.grams).collect()
    }

    /// First and last timestamp.
    pub fn span(&self) -> Option<(i64, i64)> {
        Some((self.samples.first()?.t_ms, self.samples.last()?.t_ms))
    }

    /// Same timestamps, new values.
    pub fn with_values(&self, values: &[f64]) -> SensorStream {
        debug_assert_eq!(values.len(), self.samples.len());
        SensorStream {
            sensor_id: self.sensor_id.clone(),
            samples: self
                .samples
                .iter()
                .zip(values)
                .map(|(s, &grams)| Sample { t_ms: s.t_ms, grams })
                .collect(),
        }
    }

    pub fn to_jsonl(&self) -> Result<String> {
        io::to_jsonl(&self.samples)
    }
}

#[derive(Debug, Deserialize)]
struct RawSample {
    t_ms: i64,
    grams: f64,
}

/// Parses a `{"t_ms": int, "grams": float}` line file into a sorted stream.
///
/// Out-of-order lines are sorted; exact duplicates collapse. Two samples
/// sharing a timestamp with different readings are a clock fault.
pub fn parse_sensor_stream(path: &Path, sensor_id: &str) -> Result<SensorStream> {
    let records: Vec<(usize, RawSample)> = io::read_jsonl(path)?;
    let mut samples = Vec::with_capacity(records.len());
    for (line, raw) in records {
        if raw.t_ms < 0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("negative timestamp {}", raw.t_ms),
            });
        }
        if !raw.grams.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "non-finite weight".into(),
            });
        }
        samples.push(Sample {
            t_ms: raw.t_ms,
            grams: raw.grams,
        });
    }
    samples.sort_by_key(|s| s.t_ms);
    let mut deduped: Vec<Sample> = Vec::with_capacity(samples.len());
    for s in samples {
        match deduped.last() {
            Some(prev) if prev.t_ms == s.t_ms => {
                if prev.grams != s.grams {
                    return Err(Error::Integrity {
                        path: path.to_path_buf(),
                        message: format!(
                            "two readings at t_ms={} ({} g vs {} g)",
                            s.t_ms, prev.grams, s.grams
                        ),
                    });
                }
            }
            _ => deduped.push(s),
        }
    }
    Ok(SensorStream::new(sensor_id, deduped))
}

/// One video frame timestamp. Only timing metadata is carried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub t_ms: i64,
    #[serde(rename = "frame")]
    pub frame_no: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrameIndex {
    pub entries: Vec<FrameEntry>,
}

impl FrameIndex {
    pub fn new(entries: Vec<FrameEntry>) -> Result<Self> {
        for pair in entries.windows(2) {
            if pair[1].frame_no <= pair[0].frame_no {
                return Err(Error::Validation(format!(
                    "frame numbers not strictly increasing at frame {}",
                    pair[1].frame_no
                )));
            }
            if pair[1].t_ms < pair[0].t_ms {
                return Err(Error::Validation(format!(
                    "frame timestamps decrease at frame {}",
                    pair[1].frame_no
                )));
            }
        }
        Ok(FrameIndex { entries })
    }

    pub fn span(&self) -> Option<(i64, i64)> {
        Some((self.entries.first()?.t_ms, self.entries.last()?.t_ms))
    }

    /// Last frame shown at or before `t_ms`.
    pub fn frame_at(&self, t_ms: i64) -> Option<FrameEntry> {
        let idx = self.entries.partition_point(|e| e.t_ms <= t_ms);
        idx.checked_sub(1).map(|i| self.entries[i])
    }
}

pub fn parse_frame_index(path: &Path) -> Result<FrameIndex> {
    let records: Vec<(usize, FrameEntry)> = io::read_jsonl(path)?;
    FrameIndex::new(records.into_iter().map(|(_, e)| e).collect()).map_err(|e| Error::Integrity {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub recording_id: String,
    pub streams: BTreeMap<String, SensorStream>,
    pub frames: FrameIndex,
    pub duration_ms: i64,
}

impl Recording {
    pub fn sensor_ids(&self) -> Vec<String> {
        self.streams.keys().cloned().collect()
    }
}

/// Non-fatal findings from alignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AlignWarning {
    /// The stream shares less than half the recording duration with every
    /// other stream, which usually means one device clock is off.
    ClockSkew {
        sensor_id: String,
        overlap_ms: i64,
        duration_ms: i64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub recording: Recording,
    pub warnings: Vec<AlignWarning>,
}

/// Rebases all streams and the frame index onto a common zero.
///
/// Differences between timestamps are preserved exactly.
pub fn align_recording(
    recording_id: &str,
    streams: Vec<SensorStream>,
    frames: FrameIndex,
) -> Result<Aligned> {
    if streams.is_empty() {
        return Err(Error::Empty("recording has no sensor streams".into()));
    }
    let mut spans = Vec::with_capacity(streams.len());
    for s in &streams {
        let span = s
            .span()
            .ok_or_else(|| Error::Empty(format!("sensor stream {} is empty", s.sensor_id)))?;
        spans.push(span);
    }
    let mut origin = spans.iter().map(|s| s.0).min().unwrap_or(0);
    let mut end = spans.iter().map(|s| s.1).max().unwrap_or(0);
    if let Some((f0, f1)) = frames.span() {
        origin = origin.min(f0);
        end = end.max(f1);
    }
    let duration_ms = end - origin;

    let mut warnings = Vec::new();
    if streams.len() > 1 {
        for (i, s) in streams.iter().enumerate() {
            let best = spans
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, other)| interval_overlap(spans[i], *other))
                .max()
                .unwrap_or(0);
            if 2 * best < duration_ms {
                warnings.push(AlignWarning::ClockSkew {
                    sensor_id: s.sensor_id.clone(),
                    overlap_ms: best,
                    duration_ms,
                });
            }
        }
    }

    let mut map = BTreeMap::new();
    for s in streams {
        let rebased = SensorStream {
            sensor_id: s.sensor_id.clone(),
            samples: s
                .samples
                .iter()
                .map(|x| Sample {
                    t_ms: x.t_ms - origin,
                    grams: x.grams,
                })
                .collect(),
        };
        if map.insert(s.sensor_id.clone(), rebased).is_some() {
            return Err(Error::Validation(format!(
                "sensor {} appears twice",
                s.sensor_id
            )));
        }
    }
    let frames = FrameIndex {
        entries: frames
            .entries
            .iter()
            .map(|e| FrameEntry {
                t_ms: e.t_ms - origin,
                frame_no: e.frame_no,
            })
            .collect(),
    };
    Ok(Aligned {
        recording: Recording {
            recording_id: recording_id.to_string(),
            streams: map,
            frames,
            duration_ms,
        },
        warnings,
    })
}

fn interval_overlap(a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn stream(id: &str, pts: &[(i64, f64)]) -> SensorStream {
        SensorStream::new(
            id,
            pts.iter()
                .map(|&(t_ms, grams)| Sample { t_ms, grams })
                .collect(),
        )
    }

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn parse_in_order() {
        let f = write_lines(&[
            r#"{"t_ms": 0, "grams": 500.0}"#,
            r#"{"t_ms": 20, "grams": 501.5}"#,
            r#"{"t_ms": 40, "grams": 499.0}"#,
        ]);
        let s = parse_sensor_stream(f.path(), "wood").unwrap();
        assert_eq!(s.times(), vec![0, 20, 40]);
        assert_eq!(s.values(), vec![500.0, 501.5, 499.0]);
    }

    #[test]
    fn parse_sorts_out_of_order() {
        let f = write_lines(&[
            r#"{"t_ms": 5, "grams": 1.0}"#,
            r#"{"t_ms": 2, "grams": 2.0}"#,
            r#"{"t_ms": 9, "grams": 3.0}"#,
        ]);
        let s = parse_sensor_stream(f.path(), "wood").unwrap();
        assert_eq!(s.times(), vec![2, 5, 9]);
    }

    #[test]
    fn parse_missing_field_names_line() {
        let f = write_lines(&[r#"{"t_ms": 1, "grams": 2.0}"#, r#"{"t_ms": 4}"#]);
        match parse_sensor_stream(f.path(), "wood") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_duplicates() {
        let f = write_lines(&[
            r#"{"t_ms": 1, "grams": 2.0}"#,
            r#"{"t_ms": 1, "grams": 2.0}"#,
        ]);
        assert_eq!(parse_sensor_stream(f.path(), "w").unwrap().len(), 1);

        let f = write_lines(&[
            r#"{"t_ms": 1, "grams": 2.0}"#,
            r#"{"t_ms": 1, "grams": 3.0}"#,
        ]);
        assert!(matches!(
            parse_sensor_stream(f.path(), "w"),
            Err(Error::Integrity { .. })
        ));
    }

    #[test]
    fn align_offsets() {
        let s = stream("wood", &[(1000, 1.0), (2000, 2.0)]);
        let frames = FrameIndex::new(vec![FrameEntry {
            t_ms: 1500,
            frame_no: 0,
        }])
        .unwrap();
        let out = align_recording("r", vec![s], frames).unwrap();
        let rec = out.recording;
        assert_eq!(rec.streams["wood"].times(), vec![0, 1000]);
        assert_eq!(rec.frames.entries[0].t_ms, 500);
        assert_eq!(rec.duration_ms, 1000);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn align_zero_based_is_identity() {
        let a = stream("a", &[(0, 1.0), (10, 2.0)]);
        let b = stream("b", &[(3, 1.0), (12, 2.0)]);
        let out = align_recording("r", vec![a.clone(), b.clone()], FrameIndex::default()).unwrap();
        assert_eq!(out.recording.streams["a"], a);
        assert_eq!(out.recording.streams["b"], b);
        assert_eq!(out.recording.duration_ms, 12);
    }

    #[test]
    fn align_flags_disjoint_clocks() {
        let a: Vec<(i64, f64)> = (0..=10).map(|k| (k * 1000, 0.0)).collect();
        let b: Vec<(i64, f64)> = (0..=10).map(|k| (1_000_000 + k * 1000, 0.0)).collect();
        // Oracle: plain interval intersection of the two spans.
        let (a_end, b_start) = (10_000i64, 1_000_000i64);
        let oracle = (a_end - b_start).max(0);
        assert_eq!(oracle, 0);
        let out = align_recording(
            "r",
            vec![stream("a", &a), stream("b", &b)],
            FrameIndex::default(),
        )
        .unwrap();
        assert_eq!(out.warnings.len(), 2);
        for w in &out.warnings {
            let AlignWarning::ClockSkew { overlap_ms, .. } = w;
            assert_eq!(*overlap_ms, oracle);
        }
    }

    #[test]
    fn align_rejects_empty() {
        assert!(align_recording("r", vec![], FrameIndex::default()).is_err());
        assert!(align_recording("r", vec![stream("a", &[])], FrameIndex::default()).is_err());
    }

    #[test]
    fn frame_index_rejects_reversed_frames() {
        let e = |t_ms, frame_no| FrameEntry { t_ms, frame_no };
        assert!(FrameIndex::new(vec![e(0, 1), e(10, 1)]).is_err());
        assert!(FrameIndex::new(vec![e(10, 1), e(5, 2)]).is_err());
        let idx = FrameIndex::new(vec![e(0, 0), e(33, 1), e(100, 3)]).unwrap();
        assert_eq!(idx.frame_at(50).unwrap().frame_no, 1);
        assert!(idx.frame_at(-1).is_none());
    }
}
