//! On-disk corpus layout.
//!
//! ```text
//! <dir>/<rid>.<sensor>.jsonl     one per weight sensor
//! <dir>/<rid>.frames.jsonl       video frame index
//! <dir>/catalog.json             part catalog (optional)
//! <dir>/groundtruth.<rid>.json   synthetic corpora only
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::catalog::PartCatalog;
use crate::error::{Error, Result};
use crate::io;
use crate::model::{align_recording, parse_frame_index, parse_sensor_stream, Aligned, FrameIndex, Recording};
use crate::synthgen::GroundTruth;

pub const FRAMES_SUFFIX: &str = "frames";
pub const CATALOG_FILE: &str = "catalog.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRUTH_DIR: &str = "truth";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusEntry {
    pub streams: BTreeMap<String, PathBuf>,
    pub frames: Option<PathBuf>,
}

/// Finds recordings by their `<rid>.<sensor>.jsonl` files. The recording id
/// is everything before the last dot-separated component.
pub fn discover(dir: &Path) -> Result<BTreeMap<String, CorpusEntry>> {
    let mut out: BTreeMap<String, CorpusEntry> = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() {
            continue;
        }
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(stem) = name.strip_suffix(".jsonl") else {
            continue;
        };
        let Some((rid, sensor)) = stem.rsplit_once('.') else {
            continue;
        };
        if rid.is_empty() || sensor.is_empty() || rid.ends_with(".changes") || sensor == "changes" {
            continue;
        }
        let slot = out.entry(rid.to_string()).or_default();
        if sensor == FRAMES_SUFFIX {
            slot.frames = Some(path);
        } else {
            slot.streams.insert(sensor.to_string(), path);
        }
    }
    out.retain(|_, e| !e.streams.is_empty());
    Ok(out)
}

/// Parses and aligns one recording. A missing frame index is treated as
/// empty.
pub fn load_entry(recording_id: &str, entry: &CorpusEntry) -> Result<Aligned> {
    let streams = entry
        .streams
        .iter()
        .map(|(sensor, path)| parse_sensor_stream(path, sensor))
        .collect::<Result<Vec<_>>>()?;
    let frames = match &entry.frames {
        Some(p) => parse_frame_index(p)?,
        None => FrameIndex::default(),
    };
    align_recording(recording_id, streams, frames)
}

pub fn load_recording(dir: &Path, recording_id: &str) -> Result<Aligned> {
    let all = discover(dir)?;
    let entry = all
        .get(recording_id)
        .ok_or_else(|| Error::Validation(format!("no recording {recording_id} in {}", dir.display())))?;
    load_entry(recording_id, entry)
}

/// `catalog.json` from the corpus, or the default chair catalog.
pub fn load_catalog(dir: &Path) -> Result<PartCatalog> {
    let path = dir.join(CATALOG_FILE);
    if path.exists() {
        PartCatalog::load(&path)
    } else {
        Ok(PartCatalog::chair_default())
    }
}

pub fn ground_truth_path(dir: &Path, recording_id: &str) -> PathBuf {
    dir.join(format!("groundtruth.{recording_id}.json"))
}

pub fn load_ground_truth(dir: &Path, recording_id: &str) -> Result<GroundTruth> {
    GroundTruth::load(&ground_truth_path(dir, recording_id))
}

/// Writes sensor streams and the frame index; returns the relative file
/// names.
pub fn write_recording(dir: &Path, rec: &Recording) -> Result<Vec<String>> {
    let mut files = Vec::new();
    for (sensor, stream) in &rec.streams {
        let name = format!("{}.{sensor}.jsonl", rec.recording_id);
        io::write_atomic(&dir.join(&name), stream.to_jsonl()?.as_bytes())?;
        files.push(name);
    }
    let name = format!("{}.{FRAMES_SUFFIX}.jsonl", rec.recording_id);
    io::write_jsonl(&dir.join(&name), &rec.frames.entries)?;
    files.push(name);
    Ok(files)
}
