//! Fixed-length intention labels and the label file.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

/// Default intention window length.
pub const DEFAULT_INTENTION_MS: i64 = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Manual,
    Slb,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentionLabel {
    pub class_id: u32,
    pub t_start_ms: i64,
    pub t_end_ms: i64,
    pub source: LabelSource,
}

impl IntentionLabel {
    /// A window of length `d_ms` anchored at `t_start_ms`.
    pub fn anchored(class_id: u32, t_start_ms: i64, d_ms: i64, source: LabelSource) -> Self {
        IntentionLabel {
            class_id,
            t_start_ms,
            t_end_ms: t_start_ms + d_ms,
            source,
        }
    }

    pub fn len_ms(&self) -> i64 {
        self.t_end_ms - self.t_start_ms
    }

    pub fn overlaps(&self, other: &IntentionLabel) -> bool {
        self.t_start_ms < other.t_end_ms && other.t_start_ms < self.t_end_ms
    }

    /// Stable identifier; unique within a valid label list because
    /// same-class labels never overlap.
    pub fn label_id(&self) -> String {
        format!("{}-{}", self.class_id, self.t_start_ms)
    }

    /// Time order, then class.
    pub fn time_cmp(&self, other: &IntentionLabel) -> Ordering {
        (self.t_start_ms, self.class_id).cmp(&(other.t_start_ms, other.class_id))
    }
}

/// Checks every label against the recording bounds and window length, and
/// rejects same-class overlaps.
pub fn validate_labels(labels: &[IntentionLabel], duration_ms: i64, d_ms: i64) -> Result<()> {
    for l in labels {
        if l.len_ms() != d_ms {
            return Err(Error::Validation(format!(
                "label {} has length {} ms, expected {d_ms} ms",
                l.label_id(),
                l.len_ms()
            )));
        }
        if l.t_start_ms < 0 || l.t_end_ms > duration_ms {
            return Err(Error::Validation(format!(
                "label {} [{}, {}] outside recording [0, {duration_ms}]",
                l.label_id(),
                l.t_start_ms,
                l.t_end_ms
            )));
        }
    }
    let mut sorted: Vec<&IntentionLabel> = labels.iter().collect();
    sorted.sort_by_key(|l| (l.class_id, l.t_start_ms));
    for pair in sorted.windows(2) {
        if pair[0].class_id == pair[1].class_id && pair[0].overlaps(pair[1]) {
            return Err(Error::Validation(format!(
                "labels {} and {} overlap",
                pair[0].label_id(),
                pair[1].label_id()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelFile {
    pub recording_id: String,
    pub duration_ms: i64,
    pub labels: Vec<IntentionLabel>,
}

impl LabelFile {
    pub fn new(recording_id: impl Into<String>, duration_ms: i64) -> Self {
        LabelFile {
            recording_id: recording_id.into(),
            duration_ms,
            labels: Vec::new(),
        }
    }

    pub fn validate(&self, d_ms: i64) -> Result<()> {
        validate_labels(&self.labels, self.duration_ms, d_ms)
    }

    pub fn count(&self, source: LabelSource) -> usize {
        self.labels.iter().filter(|l| l.source == source).count()
    }
}

pub fn load_labels(path: &Path, d_ms: i64) -> Result<LabelFile> {
    let file: LabelFile = io::read_json(path)?;
    file.validate(d_ms)?;
    Ok(file)
}

pub fn save_labels(file: &LabelFile, path: &Path, d_ms: i64) -> Result<()> {
    file.validate(d_ms)?;
    io::write_json(path, file)
}

/// `<dir>/<recording_id>.labels.json`
pub fn label_path(dir: &Path, recording_id: &str) -> std::path::PathBuf {
    dir.join(format!("{recording_id}.labels.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lbl(class_id: u32, start: i64) -> IntentionLabel {
        IntentionLabel::anchored(class_id, start, 4000, LabelSource::Manual)
    }

    #[test]
    fn round_trip_two_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.labels.json");
        let mut file = LabelFile::new("r", 60_000);
        file.labels = vec![lbl(2, 10_000), lbl(3, 20_000)];
        save_labels(&file, &path, 4000).unwrap();
        assert_eq!(load_labels(&path, 4000).unwrap(), file);
    }

    #[test]
    fn empty_list_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.labels.json");
        let file = LabelFile::new("r", 1000);
        save_labels(&file, &path, 4000).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"labels\": []"));
        assert!(load_labels(&path, 4000).unwrap().labels.is_empty());
    }

    #[test]
    fn wrong_length_rejected() {
        let mut file = LabelFile::new("r", 60_000);
        file.labels = vec![IntentionLabel {
            class_id: 1,
            t_start_ms: 0,
            t_end_ms: 3999,
            source: LabelSource::Manual,
        }];
        assert!(matches!(file.validate(4000), Err(Error::Validation(_))));
    }

    #[test]
    fn same_class_overlap_rejected_other_class_allowed() {
        let mut file = LabelFile::new("r", 60_000);
        file.labels = vec![lbl(2, 10_000), lbl(2, 12_000)];
        assert!(file.validate(4000).is_err());
        file.labels = vec![lbl(2, 10_000), lbl(5, 12_000)];
        file.validate(4000).unwrap();
    }

    #[test]
    fn out_of_bounds_rejected() {
        let mut file = LabelFile::new("r", 10_000);
        file.labels = vec![lbl(1, 7000)];
        assert!(file.validate(4000).is_err());
        file.labels = vec![lbl(1, -1)];
        assert!(file.validate(4000).is_err());
    }

    #[test]
    fn load_rejects_invalid_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.labels.json");
        std::fs::write(
            &path,
            r#"{"recording_id":"r","duration_ms":9000,"labels":[{"class_id":1,"t_start_ms":0,"t_end_ms":100,"source":"slb"}]}"#,
        )
        .unwrap();
        assert!(load_labels(&path, 4000).is_err());
    }
}
