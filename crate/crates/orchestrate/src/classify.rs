//! Classifier interface and the stubs that stand in for a video model.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slb_core::io::read_jsonl;
use slb_core::labels::IntentionLabel;
use slb_core::rng::{fnv1a, PortableRng};

use crate::error::{OrchestrateError, Result};
use crate::window::WindowDescriptor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub window: WindowDescriptor,
    /// 0 is "no intention".
    pub class_id: u32,
    pub confidence: f64,
}

pub trait Classifier: Send {
    fn classify(&mut self, window: &WindowDescriptor) -> Result<Prediction>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StubMode {
    Oracle,
    Noisy,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StubConfig {
    pub mode: StubMode,
    pub per_class_accuracy: f64,
    pub seed: u64,
}

impl StubConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.per_class_accuracy) {
            return Err(OrchestrateError::Config(format!(
                "per_class_accuracy {} outside [0, 1]",
                self.per_class_accuracy
            )));
        }
        Ok(())
    }
}

/// Answers with the label covering at least half the window, else 0.
pub struct OracleClassifier {
    labels: Vec<IntentionLabel>,
}

impl OracleClassifier {
    pub fn new(labels: Vec<IntentionLabel>) -> Self {
        OracleClassifier { labels }
    }

    pub fn true_class(&self, window: &WindowDescriptor) -> u32 {
        let half = (window.t_end_ms - window.t_start_ms + 1) / 2;
        let mut best = (0, 0);
        for l in &self.labels {
            let ov = window.overlap_ms(l.t_start_ms, l.t_end_ms);
            if ov >= half && ov > best.0 {
                best = (ov, l.class_id);
            }
        }
        best.1
    }
}

impl Classifier for OracleClassifier {
    fn classify(&mut self, window: &WindowDescriptor) -> Result<Prediction> {
        Ok(Prediction {
            window: window.clone(),
            class_id: self.true_class(window),
            confidence: 1.0,
        })
    }
}

/// Correct with probability `accuracy`, otherwise a uniformly drawn wrong
/// class in `0..=num_classes`. Each window gets its own stream derived from
/// the seed and window identity, so results do not depend on call order.
pub struct NoisyClassifier {
    oracle: OracleClassifier,
    accuracy: f64,
    num_classes: u32,
    seed: u64,
}

impl NoisyClassifier {
    pub fn new(labels: Vec<IntentionLabel>, num_classes: u32, cfg: &StubConfig) -> Result<Self> {
        cfg.validate()?;
        if num_classes == 0 {
            return Err(OrchestrateError::Config("noisy classifier needs at least one class".into()));
        }
        Ok(NoisyClassifier {
            oracle: OracleClassifier::new(labels),
            accuracy: cfg.per_class_accuracy,
            num_classes,
            seed: cfg.seed,
        })
    }

    /// Answer for a known true class; exposed so the stub can be scored on
    /// arbitrary class mixes.
    pub fn answer(&self, truth: u32, key: u64) -> (u32, f64) {
        let mut rng = PortableRng::derive(self.seed, key);
        let class_id = if rng.bernoulli(self.accuracy) {
            truth
        } else {
            let k = rng.int_range(1, self.num_classes as i64) as u32;
            (truth + k) % (self.num_classes + 1)
        };
        (class_id, rng.uniform_range(0.5, 1.0))
    }
}

impl Classifier for NoisyClassifier {
    fn classify(&mut self, window: &WindowDescriptor) -> Result<Prediction> {
        let truth = self.oracle.true_class(window);
        let key = fnv1a(&window.recording_id) ^ window.t_start_ms as u64;
        let (class_id, confidence) = self.answer(truth, key);
        Ok(Prediction {
            window: window.clone(),
            class_id,
            confidence,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedLine {
    pub window_start_ms: i64,
    pub class_id: u32,
    pub confidence: f64,
}

/// Replays predictions in file order; each line must name the window it is
/// for.
pub struct ScriptedClassifier {
    path: PathBuf,
    lines: std::vec::IntoIter<(usize, ScriptedLine)>,
}

impl ScriptedClassifier {
    pub fn load(path: &Path) -> Result<Self> {
        let lines = read_jsonl::<ScriptedLine>(path)?;
        Ok(Self::from_lines(path, lines))
    }

    pub fn from_lines(path: &Path, lines: Vec<(usize, ScriptedLine)>) -> Self {
        ScriptedClassifier {
            path: path.to_path_buf(),
            lines: lines.into_iter(),
        }
    }
}

impl Classifier for ScriptedClassifier {
    fn classify(&mut self, window: &WindowDescriptor) -> Result<Prediction> {
        let Some((line, s)) = self.lines.next() else {
            return Err(OrchestrateError::ScriptExhausted {
                path: self.path.clone(),
                window_start_ms: window.t_start_ms,
            });
        };
        if s.window_start_ms != window.t_start_ms {
            return Err(OrchestrateError::ScriptMismatch {
                path: self.path.clone(),
                line,
                expected: window.t_start_ms,
                found: s.window_start_ms,
            });
        }
        if !(0.0..=1.0).contains(&s.confidence) {
            return Err(OrchestrateError::Config(format!(
                "confidence {} at line {line} outside [0, 1]",
                s.confidence
            )));
        }
        Ok(Prediction {
            window: window.clone(),
            class_id: s.class_id,
            confidence: s.confidence,
        })
    }
}
