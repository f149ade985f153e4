//! Ground-truth synthetic assembly traces.
//!
//! A scenario walks the part catalog in SOP order. Each step removes one part
//! from its tray (a state change) and is preceded by an intention window
//! ending `tau` before the change. Weight streams are the resulting
//! staircases plus Gaussian noise and short positive spikes (a hand resting
//! on the tray). Every latent quantity is returned alongside the recording.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::PartCatalog;
use crate::corpus;
use crate::detect::ChangeRecord;
use crate::error::{Error, Result};
use crate::io;
use crate::labels::{save_labels, IntentionLabel, LabelFile, LabelSource, DEFAULT_INTENTION_MS};
use crate::model::{FrameEntry, FrameIndex, Recording, Sample, SensorStream};
use crate::rng::PortableRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_recordings: usize,
    pub sample_rate_hz: f64,
    pub noise_sigma_g: f64,
    pub spike_rate_per_min: f64,
    pub spike_min_ms: i64,
    pub spike_max_ms: i64,
    /// Spike height range in grams, added on top of the tray weight.
    pub spike_magnitude_g: (f64, f64),
    /// Mean interaction time per class; classes not listed use 2000 ms.
    pub tau_mean_ms: BTreeMap<u32, i64>,
    /// Uniform jitter half-width per class; classes not listed use 400 ms.
    pub tau_jitter_ms: BTreeMap<u32, i64>,
    /// Time between consecutive state changes, inclusive range.
    pub inter_step_gap_ms: (i64, i64),
    /// Minimum gap between a state change and the next intention's start.
    pub min_padding_ms: i64,
    pub tail_ms: i64,
    pub catalog: PartCatalog,
    /// Tray weight with no parts, per sensor.
    pub tray_weight_g: BTreeMap<String, f64>,
    /// First sample time per sensor.
    pub sensor_phase_ms: BTreeMap<String, i64>,
    pub fps: f64,
    pub frame_drop_rate: f64,
    pub d_ms: i64,
}

const DEFAULT_TAU_MS: i64 = 2000;
const DEFAULT_JITTER_MS: i64 = 400;

impl Default for ScenarioConfig {
    fn default() -> Self {
        let catalog = PartCatalog::chair_default();
        // Per-class means spread around 2 s so per-class fitting matters.
        let tau_mean_ms = catalog
            .parts
            .iter()
            .map(|p| (p.class_id, 2000 + 50 * ((p.class_id as i64 * 7) % 13 - 6)))
            .collect();
        let tau_jitter_ms = catalog.parts.iter().map(|p| (p.class_id, 400)).collect();
        ScenarioConfig {
            seed: 42,
            n_recordings: 50,
            sample_rate_hz: 50.0,
            noise_sigma_g: 2.0,
            spike_rate_per_min: 2.0,
            spike_min_ms: 40,
            spike_max_ms: 300,
            spike_magnitude_g: (10.0, 50.0),
            tau_mean_ms,
            tau_jitter_ms,
            inter_step_gap_ms: (9000, 13_000),
            min_padding_ms: 1000,
            tail_ms: 6000,
            catalog,
            tray_weight_g: [("plastic".to_string(), 350.0), ("wood".to_string(), 800.0)]
                .into_iter()
                .collect(),
            sensor_phase_ms: [("plastic".to_string(), 5), ("wood".to_string(), 0)]
                .into_iter()
                .collect(),
            fps: 30.0,
            frame_drop_rate: 0.01,
            d_ms: DEFAULT_INTENTION_MS,
        }
    }
}

impl ScenarioConfig {
    /// No noise, no spikes: exact staircases.
    pub fn clean(self) -> Self {
        ScenarioConfig {
            noise_sigma_g: 0.0,
            spike_rate_per_min: 0.0,
            ..self
        }
    }

    /// A second lab: slower hand-overs and a different tray with different
    /// parts. Used to check adaptation of the interaction-time model.
    pub fn shifted_lab() -> Self {
        let mut cfg = ScenarioConfig {
            seed: 4242,
            ..ScenarioConfig::default()
        };
        for (class_id, tau) in cfg.tau_mean_ms.iter_mut() {
            *tau = 4200 + 60 * ((*class_id as i64 * 5) % 11 - 5);
        }
        for part in &mut cfg.catalog.parts {
            part.expected_delta_g -= 4.0;
        }
        cfg.inter_step_gap_ms = (11_000, 15_000);
        cfg.tray_weight_g.insert("wood".into(), 650.0);
        cfg.tray_weight_g.insert("plastic".into(), 410.0);
        cfg
    }

    pub fn tau_mean(&self, class_id: u32) -> i64 {
        *self.tau_mean_ms.get(&class_id).unwrap_or(&DEFAULT_TAU_MS)
    }

    pub fn tau_jitter(&self, class_id: u32) -> i64 {
        *self.tau_jitter_ms.get(&class_id).unwrap_or(&DEFAULT_JITTER_MS)
    }

    pub fn validate(&self) -> Result<()> {
        self.catalog.validate()?;
        if self.catalog.parts.is_empty() {
            return Err(Error::Config("scenario catalog is empty".into()));
        }
        if !(self.sample_rate_hz > 0.0) || !(self.fps > 0.0) {
            return Err(Error::Config("sample_rate_hz and fps must be positive".into()));
        }
        if self.noise_sigma_g < 0.0 || self.spike_rate_per_min < 0.0 {
            return Err(Error::Config("noise and spike rate must be non-negative".into()));
        }
        if self.spike_min_ms < 1 || self.spike_max_ms < self.spike_min_ms {
            return Err(Error::Config("spike duration range is empty".into()));
        }
        if !(0.0..1.0).contains(&self.frame_drop_rate) {
            return Err(Error::Config("frame_drop_rate must be in [0, 1)".into()));
        }
        if self.d_ms <= 0 {
            return Err(Error::Config("d_ms must be positive".into()));
        }
        let (gap_lo, gap_hi) = self.inter_step_gap_ms;
        if gap_lo > gap_hi {
            return Err(Error::Config("inter_step_gap_ms range is empty".into()));
        }
        for part in &self.catalog.parts {
            if !self.tray_weight_g.contains_key(&part.sensor_id) {
                return Err(Error::Config(format!(
                    "no tray weight for sensor {}",
                    part.sensor_id
                )));
            }
            if part.sensor_id == corpus::FRAMES_SUFFIX {
                return Err(Error::Config("sensor id 'frames' is reserved".into()));
            }
            let c = part.class_id;
            if self.tau_jitter(c) < 0 || self.tau_mean(c) - self.tau_jitter(c) < 0 {
                return Err(Error::Config(format!("class {c}: tau may be negative")));
            }
            let need = self.d_ms + self.tau_mean(c) + self.tau_jitter(c) + self.min_padding_ms;
            if gap_lo < need {
                return Err(Error::Config(format!(
                    "class {c}: step gap {gap_lo} ms cannot fit intention + tau + padding ({need} ms)"
                )));
            }
        }
        Ok(())
    }

    pub fn recording_id(&self, index: usize) -> String {
        format!("rec-{:04}", index + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub sensor_index: usize,
    pub t_start_ms: i64,
    pub t_end_ms: i64,
    pub magnitude_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub recording_id: String,
    pub duration_ms: i64,
    pub true_state_changes: Vec<ChangeRecord>,
    pub true_labels: Vec<IntentionLabel>,
    pub true_taus: Vec<i64>,
    /// `(label index, state change index)`.
    pub pairing: Vec<(usize, usize)>,
    /// Previous state change to intention start, for every label after the
    /// first.
    pub pre_padding_ms: Vec<i64>,
    pub spikes: Vec<Spike>,
}

impl GroundTruth {
    pub fn label_file(&self) -> LabelFile {
        LabelFile {
            recording_id: self.recording_id.clone(),
            duration_ms: self.duration_ms,
            labels: self.true_labels.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}

struct Step {
    class_id: u32,
    sensor: String,
    delta_g: f64,
    t_change: i64,
    tau: i64,
}

/// Builds one recording deterministically from `(config.seed, index)`.
pub fn generate_recording(config: &ScenarioConfig, index: usize) -> Result<(Recording, GroundTruth)> {
    config.validate()?;
    let recording_id = config.recording_id(index);
    let mut rng = PortableRng::derive(config.seed, index as u64);

    let mut steps = Vec::with_capacity(config.catalog.parts.len());
    let mut t_prev = 0;
    for part in &config.catalog.parts {
        let gap = rng.int_range(config.inter_step_gap_ms.0, config.inter_step_gap_ms.1);
        let jitter = config.tau_jitter(part.class_id);
        let tau = config.tau_mean(part.class_id) + rng.int_range(-jitter, jitter);
        let t_change = t_prev + gap;
        steps.push(Step {
            class_id: part.class_id,
            sensor: part.sensor_id.clone(),
            delta_g: part.expected_delta_g,
            t_change,
            tau,
        });
        t_prev = t_change;
    }
    let end_ms = t_prev + config.tail_ms;

    let sensors: Vec<String> = config.tray_weight_g.keys().cloned().collect();
    let period = 1000.0 / config.sample_rate_hz;
    let rate_per_ms = config.spike_rate_per_min / 60_000.0;
    let mut streams = Vec::with_capacity(sensors.len());
    let mut spikes = Vec::new();
    for (si, sensor) in sensors.iter().enumerate() {
        let mut sensor_spikes = Vec::new();
        if rate_per_ms > 0.0 {
            let mut t = 0.0;
            loop {
                t += -(1.0 - rng.uniform()).ln() / rate_per_ms;
                if t >= end_ms as f64 {
                    break;
                }
                let len = rng.int_range(config.spike_min_ms, config.spike_max_ms);
                let (lo, hi) = config.spike_magnitude_g;
                let start = t as i64;
                sensor_spikes.push(Spike {
                    sensor_index: si,
                    t_start_ms: start,
                    t_end_ms: start + len,
                    magnitude_g: rng.uniform_range(lo, hi),
                });
            }
        }

        let initial: f64 = config.tray_weight_g[sensor]
            - config
                .catalog
                .parts
                .iter()
                .filter(|p| &p.sensor_id == sensor)
                .map(|p| p.expected_delta_g)
                .sum::<f64>();
        let phase = *config.sensor_phase_ms.get(sensor).unwrap_or(&0);
        let mut samples = Vec::new();
        for k in 0.. {
            let t_ms = phase + (k as f64 * period).round() as i64;
            if t_ms > end_ms {
                break;
            }
            let mut grams = initial
                + steps
                    .iter()
                    .filter(|s| &s.sensor == sensor && s.t_change <= t_ms)
                    .map(|s| s.delta_g)
                    .sum::<f64>();
            for sp in &sensor_spikes {
                if sp.t_start_ms <= t_ms && t_ms < sp.t_end_ms {
                    grams += sp.magnitude_g;
                }
            }
            if config.noise_sigma_g > 0.0 {
                grams += config.noise_sigma_g * rng.normal();
            }
            samples.push(Sample { t_ms, grams });
        }
        spikes.extend(sensor_spikes);
        streams.push(SensorStream::new(sensor.clone(), samples));
    }

    let frame_period = 1000.0 / config.fps;
    let mut frames = Vec::new();
    for k in 0u64.. {
        let t_ms = (k as f64 * frame_period).round() as i64;
        if t_ms > end_ms {
            break;
        }
        if rng.bernoulli(config.frame_drop_rate) {
            continue;
        }
        frames.push(FrameEntry { t_ms, frame_no: k });
    }

    let duration_ms = streams
        .iter()
        .filter_map(|s| s.span())
        .map(|s| s.1)
        .chain(frames.last().map(|f| f.t_ms))
        .max()
        .unwrap_or(0);

    let mut truth = GroundTruth {
        recording_id: recording_id.clone(),
        duration_ms,
        true_state_changes: Vec::with_capacity(steps.len()),
        true_labels: Vec::with_capacity(steps.len()),
        true_taus: Vec::with_capacity(steps.len()),
        pairing: Vec::with_capacity(steps.len()),
        pre_padding_ms: Vec::new(),
        spikes,
    };
    for (i, s) in steps.iter().enumerate() {
        let t_end = s.t_change - s.tau;
        let label = IntentionLabel {
            class_id: s.class_id,
            t_start_ms: t_end - config.d_ms,
            t_end_ms: t_end,
            source: LabelSource::Manual,
        };
        if i > 0 {
            truth
                .pre_padding_ms
                .push(label.t_start_ms - steps[i - 1].t_change);
        }
        truth.true_state_changes.push(ChangeRecord {
            t_ms: s.t_change,
            sensor: s.sensor.clone(),
            delta_g: s.delta_g,
            class_id: Some(s.class_id),
        });
        truth.true_labels.push(label);
        truth.true_taus.push(s.tau);
        truth.pairing.push((i, i));
    }

    let recording = Recording {
        recording_id,
        streams: streams
            .into_iter()
            .map(|s| (s.sensor_id.clone(), s))
            .collect(),
        frames: FrameIndex::new(frames)?,
        duration_ms,
    };
    Ok((recording, truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ScenarioConfig,
    pub recordings: Vec<String>,
    pub files: Vec<String>,
    pub assumptions: Vec<String>,
}

/// Writes `config.n_recordings` recordings, their ground truth, the part
/// catalog and a manifest into `out`.
pub fn generate_corpus(config: &ScenarioConfig, out: &Path, force: bool) -> Result<Manifest> {
    config.validate()?;
    if out.exists() {
        let non_empty = fs::read_dir(out)
            .map_err(|e| Error::io(out, e))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(Error::Validation(format!(
                "{} exists and is not empty (use force to overwrite)",
                out.display()
            )));
        }
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let written: Vec<Vec<String>> = (0..config.n_recordings)
        .into_par_iter()
        .map(|index| -> Result<Vec<String>> {
            let (rec, truth) = generate_recording(config, index)?;
            let mut files = corpus::write_recording(out, &rec)?;
            let gt = corpus::ground_truth_path(out, &rec.recording_id);
            io::write_json(&gt, &truth)?;
            files.push(relative(out, &gt));
            let truth_labels = crate::labels::label_path(&out.join(corpus::TRUTH_DIR), &rec.recording_id);
            save_labels(&truth.label_file(), &truth_labels, config.d_ms)?;
            files.push(relative(out, &truth_labels));
            Ok(files)
        })
        .collect::<Result<_>>()?;

    let catalog_path = out.join(corpus::CATALOG_FILE);
    io::write_json(&catalog_path, &config.catalog)?;
    let mut files: Vec<String> = written.into_iter().flatten().collect();
    files.push(corpus::CATALOG_FILE.to_string());
    files.sort();

    let manifest = Manifest {
        config: config.clone(),
        recordings: (0..config.n_recordings).map(|i| config.recording_id(i)).collect(),
        files,
        assumptions: vec![
            "interaction times are synthetic: per-class mean plus uniform jitter".into(),
            "tray layout, part weights and spike model are synthetic".into(),
        ],
    };
    io::write_json(&out.join(corpus::MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

fn relative(base: &Path, path: &Path) -> String {
    path.strip_prefix(base)
        .map(PathBuf::from)
        .unwrap_or_else(|_| path.to_path_buf())
        .to_string_lossy()
        .replace('\\', "/")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::validate_labels;

    #[test]
    fn deterministic() {
        let cfg = ScenarioConfig::default();
        let a = generate_recording(&cfg, 3).unwrap();
        let b = generate_recording(&cfg, 3).unwrap();
        assert_eq!(a, b);
        let c = generate_recording(&cfg, 4).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn conservation_single_part() {
        let mut cfg = ScenarioConfig::default().clean();
        cfg.catalog = PartCatalog::new(vec![crate::catalog::Part {
            class_id: 1,
            name: "block".into(),
            sensor_id: "wood".into(),
            expected_delta_g: -100.0,
            tolerance_g: 5.0,
        }])
        .unwrap();
        let (rec, _) = generate_recording(&cfg, 0).unwrap();
        let s = &rec.streams["wood"].samples;
        assert_eq!(s.last().unwrap().grams, s[0].grams - 100.0);
    }

    #[test]
    fn clean_levels_follow_removed_parts() {
        let cfg = ScenarioConfig::default().clean();
        let (rec, truth) = generate_recording(&cfg, 1).unwrap();
        for (sensor, stream) in &rec.streams {
            let initial = stream.samples[0].grams;
            for sample in stream.samples.iter().step_by(97) {
                let removed: f64 = truth
                    .true_state_changes
                    .iter()
                    .filter(|c| &c.sensor == sensor && c.t_ms <= sample.t_ms)
                    .map(|c| c.delta_g)
                    .sum();
                assert!((sample.grams - (initial + removed)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn truth_is_consistent() {
        let cfg = ScenarioConfig::default();
        let (rec, truth) = generate_recording(&cfg, 0).unwrap();
        assert_eq!(truth.true_labels.len(), 13);
        validate_labels(&truth.true_labels, rec.duration_ms, cfg.d_ms).unwrap();
        for &(li, ci) in &truth.pairing {
            let l = &truth.true_labels[li];
            let c = &truth.true_state_changes[ci];
            assert_eq!(Some(l.class_id), c.class_id);
            assert_eq!(c.t_ms - l.t_end_ms, truth.true_taus[li]);
        }
        assert_eq!(rec.duration_ms, truth.duration_ms);
        let period = 1000.0 / 30.0;
        let dropped = (rec.duration_ms as f64 / period) as usize + 1 - rec.frames.entries.len();
        assert!(dropped < rec.frames.entries.len() / 20);
    }

    #[test]
    fn unsatisfiable_gaps_rejected() {
        let cfg = ScenarioConfig {
            inter_step_gap_ms: (5000, 6000),
            ..ScenarioConfig::default()
        };
        assert!(matches!(generate_recording(&cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn corpus_refuses_non_empty_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x"), "1").unwrap();
        let cfg = ScenarioConfig {
            n_recordings: 1,
            ..ScenarioConfig::default()
        };
        assert!(generate_corpus(&cfg, dir.path(), false).is_err());
        generate_corpus(&cfg, dir.path(), true).unwrap();
    }
}
