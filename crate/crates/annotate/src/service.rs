//! HTTP endpoints. Reads run concurrently; label mutations take a
//! per-recording lock and commit with a temp-file rename before replying.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::routing::{delete, get};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use slb_core::catalog::PartCatalog;
use slb_core::corpus::{self, CorpusEntry};
use slb_core::detect::{
    change_report_path, detect_state_changes, read_change_report, DetectorConfig, StateChange,
};
use slb_core::labels::{
    label_path, load_labels, save_labels, IntentionLabel, LabelFile, LabelSource, DEFAULT_INTENTION_MS,
};
use slb_core::model::{FrameEntry, Recording};
use tokio::net::TcpListener;

use crate::downsample::{downsample_min_max, Bucket};
use crate::error::{AnnotateError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub corpus_dir: PathBuf,
    /// Where label files are read and written; `<corpus>/labels` by default.
    pub labels_dir: Option<PathBuf>,
    pub d_ms: i64,
    pub detector: DetectorConfig,
}

impl ServiceConfig {
    pub fn new(corpus_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            corpus_dir: corpus_dir.into(),
            labels_dir: None,
            d_ms: DEFAULT_INTENTION_MS,
            detector: DetectorConfig::default(),
        }
    }
}

pub struct AppState {
    corpus_dir: PathBuf,
    labels_dir: PathBuf,
    d_ms: i64,
    detector: DetectorConfig,
    catalog: PartCatalog,
    write_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Result<Self> {
        if !cfg.corpus_dir.is_dir() {
            return Err(AnnotateError::MissingCorpus(cfg.corpus_dir));
        }
        cfg.detector.validate()?;
        let labels_dir = cfg.labels_dir.unwrap_or_else(|| cfg.corpus_dir.join("labels"));
        std::fs::create_dir_all(&labels_dir)?;
        Ok(AppState {
            catalog: corpus::load_catalog(&cfg.corpus_dir)?,
            corpus_dir: cfg.corpus_dir,
            labels_dir,
            d_ms: cfg.d_ms,
            detector: cfg.detector,
            write_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn labels_dir(&self) -> &Path {
        &self.labels_dir
    }

    fn entry(&self, rid: &str) -> Result<CorpusEntry> {
        corpus::discover(&self.corpus_dir)?
            .remove(rid)
            .ok_or_else(|| AnnotateError::NotFound(format!("recording {rid}")))
    }

    fn recording(&self, rid: &str) -> Result<Recording> {
        Ok(corpus::load_entry(rid, &self.entry(rid)?)?.recording)
    }

    fn label_file(&self, rid: &str, duration_ms: i64) -> Result<LabelFile> {
        let path = label_path(&self.labels_dir, rid);
        if path.exists() {
            Ok(load_labels(&path, self.d_ms)?)
        } else {
            Ok(LabelFile::new(rid, duration_ms))
        }
    }

    fn write_lock(&self, rid: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.write_locks.lock().expect("lock table");
        Arc::clone(locks.entry(rid.to_string()).or_default())
    }

    fn summary(&self, rid: &str, entry: &CorpusEntry) -> Result<RecordingSummary> {
        let rec = corpus::load_entry(rid, entry)?.recording;
        let labels = self.label_file(rid, rec.duration_ms)?;
        let report = change_report_path(&self.corpus_dir, rid);
        let state_change_count = if report.exists() {
            read_change_report(&report)?.len()
        } else {
            detect_state_changes(&rec, &self.catalog, &self.detector)?.len()
        };
        Ok(RecordingSummary {
            recording_id: rid.to_string(),
            duration_ms: rec.duration_ms,
            sensor_ids: rec.sensor_ids(),
            label_counts: BTreeMap::from([
                (LabelSource::Manual, labels.count(LabelSource::Manual)),
                (LabelSource::Slb, labels.count(LabelSource::Slb)),
            ]),
            state_change_count,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingSummary {
    pub recording_id: String,
    pub duration_ms: i64,
    pub sensor_ids: Vec<String>,
    pub label_counts: BTreeMap<LabelSource, usize>,
    pub state_change_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvalidRecording {
    pub recording_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingList {
    pub recordings: Vec<RecordingSummary>,
    pub invalid: Vec<InvalidRecording>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamsResponse {
    pub recording_id: String,
    pub duration_ms: i64,
    /// True when every sample is returned as its own bucket.
    pub raw: bool,
    pub series: BTreeMap<String, Vec<Bucket>>,
    pub state_changes: Vec<StateChange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelView {
    pub label_id: String,
    #[serde(flatten)]
    pub label: IntentionLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelList {
    pub recording_id: String,
    pub duration_ms: i64,
    pub labels: Vec<LabelView>,
}

impl From<&LabelFile> for LabelList {
    fn from(f: &LabelFile) -> Self {
        LabelList {
            recording_id: f.recording_id.clone(),
            duration_ms: f.duration_ms,
            labels: f
                .labels
                .iter()
                .map(|l| LabelView {
                    label_id: l.label_id(),
                    label: l.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewLabel {
    pub class_id: u32,
    pub t_start_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramesResponse {
    pub recording_id: String,
    pub entries: Vec<FrameEntry>,
}

#[derive(Debug, Deserialize)]
struct StreamsQuery {
    points: Option<usize>,
}

const DEFAULT_POINTS: usize = 1000;

type Shared = State<Arc<AppState>>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| AnnotateError::Io(std::io::Error::other(e)))?
}

async fn list_recordings(State(st): Shared) -> Result<Json<RecordingList>> {
    let list = blocking(move || {
        let mut out = RecordingList {
            recordings: Vec::new(),
            invalid: Vec::new(),
        };
        for (rid, entry) in corpus::discover(&st.corpus_dir)? {
            match st.summary(&rid, &entry) {
                Ok(s) => out.recordings.push(s),
                Err(e) => out.invalid.push(InvalidRecording {
                    recording_id: rid,
                    error: e.to_string(),
                }),
            }
        }
        Ok(out)
    })
    .await?;
    Ok(Json(list))
}

async fn get_streams(
    State(st): Shared,
    UrlPath(rid): UrlPath<String>,
    Query(q): Query<StreamsQuery>,
) -> Result<Json<StreamsResponse>> {
    let points = q.points.unwrap_or(DEFAULT_POINTS);
    if points == 0 {
        return Err(AnnotateError::Validation("points must be at least 1".into()));
    }
    let resp = blocking(move || {
        let rec = st.recording(&rid)?;
        let state_changes = detect_state_changes(&rec, &st.catalog, &st.detector)?;
        let raw = rec.streams.values().all(|s| s.samples.len() <= points);
        let series = rec
            .streams
            .iter()
            .map(|(id, s)| (id.clone(), downsample_min_max(&s.samples, points)))
            .collect();
        Ok(StreamsResponse {
            recording_id: rid,
            duration_ms: rec.duration_ms,
            raw,
            series,
            state_changes,
        })
    })
    .await?;
    Ok(Json(resp))
}

async fn get_frames(State(st): Shared, UrlPath(rid): UrlPath<String>) -> Result<Json<FramesResponse>> {
    let rec = blocking(move || st.recording(&rid)).await?;
    Ok(Json(FramesResponse {
        recording_id: rec.recording_id,
        entries: rec.frames.entries,
    }))
}

async fn get_labels(State(st): Shared, UrlPath(rid): UrlPath<String>) -> Result<Json<LabelList>> {
    let file = blocking(move || {
        let rec = st.recording(&rid)?;
        st.label_file(&rid, rec.duration_ms)
    })
    .await?;
    Ok(Json(LabelList::from(&file)))
}

async fn post_label(
    State(st): Shared,
    UrlPath(rid): UrlPath<String>,
    Json(body): Json<NewLabel>,
) -> Result<(StatusCode, Json<LabelList>)> {
    if st.catalog.get(body.class_id).is_none() {
        return Err(AnnotateError::Validation(format!("unknown class {}", body.class_id)));
    }
    let lock = st.write_lock(&rid);
    let _guard = lock.lock().await;
    let (status, file) = blocking(move || {
        let rec = st.recording(&rid)?;
        let mut file = st.label_file(&rid, rec.duration_ms)?;
        let label = IntentionLabel::anchored(body.class_id, body.t_start_ms, st.d_ms, LabelSource::Manual);
        if file.labels.iter().any(|l| l.class_id == label.class_id && l.t_start_ms == label.t_start_ms) {
            return Ok((StatusCode::OK, file));
        }
        file.labels.push(label);
        file.labels.sort_by(|a, b| a.time_cmp(b));
        save_labels(&file, &label_path(&st.labels_dir, &rid), st.d_ms)?;
        Ok((StatusCode::CREATED, file))
    })
    .await?;
    Ok((status, Json(LabelList::from(&file))))
}

async fn delete_label(
    State(st): Shared,
    UrlPath((rid, label_id)): UrlPath<(String, String)>,
) -> Result<Json<LabelList>> {
    let lock = st.write_lock(&rid);
    let _guard = lock.lock().await;
    let file = blocking(move || {
        let rec = st.recording(&rid)?;
        let mut file = st.label_file(&rid, rec.duration_ms)?;
        let before = file.labels.len();
        file.labels.retain(|l| l.label_id() != label_id);
        if file.labels.len() == before {
            return Err(AnnotateError::NotFound(format!("label {label_id} in {rid}")));
        }
        save_labels(&file, &label_path(&st.labels_dir, &rid), st.d_ms)?;
        Ok(file)
    })
    .await?;
    Ok(Json(LabelList::from(&file)))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/recordings", get(list_recordings))
        .route("/recordings/{id}/streams", get(get_streams))
        .route("/recordings/{id}/frames", get(get_frames))
        .route("/recordings/{id}/labels", get(get_labels).post(post_label))
        .route("/recordings/{id}/labels/{label_id}", delete(delete_label))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, cfg: ServiceConfig) -> Result<()> {
    let app = router(Arc::new(AppState::new(cfg)?));
    axum::serve(listener, app).await?;
    Ok(())
}
