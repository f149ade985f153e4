//! One assembly session: windows are produced, classified and dispatched in
//! a three-stage pipeline. The dispatch stage owns the robot connection and
//! merges predictions with weight-sensor state changes in time order.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;
use std::sync::mpsc::{sync_channel, Receiver};
use std::thread;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use slb_core::catalog::PartCatalog;
use slb_core::detect::{detect_state_changes, ChangeRecord, DetectorConfig};
use slb_core::labels::DEFAULT_INTENTION_MS;
use slb_core::model::Recording;
use slb_robot::client::DEFAULT_TIMEOUT_MS;
use slb_robot::{ExecutionPath, Outcome, RobotClient, Transport};

use crate::classify::{Classifier, Prediction};
use crate::error::{OrchestrateError, Result};
use crate::window::{window_stream, WindowDescriptor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceMode {
    /// Only the next class in the SOP may be dispatched.
    Strict,
    /// Any class not yet completed may be dispatched.
    AnyRemaining,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Policy {
    pub min_confidence: f64,
    pub debounce_ms: i64,
    pub mode: SequenceMode,
    pub window_ms: i64,
    pub stride_ms: i64,
    pub robot_timeout_ms: i64,
    /// Capacity of each queue between pipeline stages.
    pub queue_depth: usize,
}

impl Default for Policy {
    fn default() -> Self {
        Policy {
            min_confidence: 0.5,
            debounce_ms: DEFAULT_INTENTION_MS,
            mode: SequenceMode::Strict,
            window_ms: DEFAULT_INTENTION_MS,
            stride_ms: 2000,
            robot_timeout_ms: DEFAULT_TIMEOUT_MS,
            queue_depth: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInput {
    pub recording_id: String,
    pub duration_ms: i64,
    /// Class order of the standard operating procedure.
    pub sop: Vec<u32>,
    pub changes: Vec<ChangeRecord>,
}

impl SessionInput {
    /// Runs the detector over the recording's weight streams.
    pub fn from_recording(rec: &Recording, catalog: &PartCatalog, cfg: &DetectorConfig) -> Result<Self> {
        let changes = detect_state_changes(rec, catalog, cfg)?
            .iter()
            .map(|c| c.record())
            .collect();
        Ok(SessionInput {
            recording_id: rec.recording_id.clone(),
            duration_ms: rec.duration_ms,
            sop: catalog.parts.iter().map(|p| p.class_id).collect(),
            changes,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlarmKind {
    MissedPrediction,
    WrongDispatch,
    OutOfSequence,
    UnknownChange,
    RobotFailure,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SafeguardState {
    pub expected_next_classes: BTreeSet<u32>,
    pub completed_classes: Vec<u32>,
    pub alarms: Vec<(i64, AlarmKind)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Prediction,
    Dispatch,
    RobotDone,
    StateChange,
    Alarm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub t_ms: i64,
    pub kind: EventKind,
    pub detail: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SessionOutcome {
    Completed,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub recording_id: String,
    pub events: Vec<SessionEvent>,
    pub dispatches: Vec<u32>,
    pub safeguard: SafeguardState,
    pub outcome: SessionOutcome,
}

impl SessionLog {
    pub fn alarm_count(&self, kind: AlarmKind) -> usize {
        self.safeguard.alarms.iter().filter(|(_, k)| *k == kind).count()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        Ok(slb_core::io::to_jsonl(&self.events)?)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        Ok(slb_core::io::write_jsonl(path, &self.events)?)
    }
}

struct Completion {
    t_ms: i64,
    class_id: u32,
    duration_ms: i64,
    failure: Option<String>,
}

struct Dispatcher<'a, T: Transport> {
    client: &'a mut RobotClient<T>,
    paths: &'a BTreeMap<u32, ExecutionPath>,
    policy: &'a Policy,
    sop: Vec<u32>,
    changes: VecDeque<ChangeRecord>,
    events: Vec<SessionEvent>,
    safeguard: SafeguardState,
    predicted: BTreeSet<u32>,
    last_dispatch: BTreeMap<u32, i64>,
    /// Dispatched class still waiting for its state change.
    awaiting_change: Option<u32>,
    in_flight: Option<Completion>,
    dispatches: Vec<u32>,
    failure: Option<String>,
}

impl<T: Transport> Dispatcher<'_, T> {
    fn log(&mut self, t_ms: i64, kind: EventKind, detail: Value) {
        self.events.push(SessionEvent { t_ms, kind, detail });
    }

    fn alarm(&mut self, t_ms: i64, kind: AlarmKind, mut detail: Value) {
        detail["kind"] = json!(kind);
        self.safeguard.alarms.push((t_ms, kind));
        self.log(t_ms, EventKind::Alarm, detail);
    }

    fn refresh_expected(&mut self) {
        let done: BTreeSet<u32> = self.safeguard.completed_classes.iter().copied().collect();
        let mut remaining = self.sop.iter().copied().filter(|c| !done.contains(c));
        self.safeguard.expected_next_classes = match self.policy.mode {
            SequenceMode::Strict => remaining.next().into_iter().collect(),
            SequenceMode::AnyRemaining => remaining.collect(),
        };
    }

    /// Processes robot completions and state changes up to `t_ms`.
    fn advance_to(&mut self, t_ms: i64) {
        loop {
            if self.failure.is_some() {
                return;
            }
            let done_t = self.in_flight.as_ref().map(|c| c.t_ms).filter(|t| *t <= t_ms);
            let change_t = self.changes.front().map(|c| c.t_ms).filter(|t| *t <= t_ms);
            match (done_t, change_t) {
                (None, None) => return,
                (Some(d), Some(c)) if c < d => self.on_change(),
                (Some(_), _) => self.on_completion(),
                (None, Some(_)) => self.on_change(),
            }
        }
    }

    fn on_completion(&mut self) {
        let c = self.in_flight.take().expect("checked");
        let status = if c.failure.is_some() { "failed" } else { "completed" };
        self.log(
            c.t_ms,
            EventKind::RobotDone,
            json!({"class_id": c.class_id, "status": status, "duration_ms": c.duration_ms}),
        );
        if let Some(reason) = c.failure {
            self.alarm(
                c.t_ms,
                AlarmKind::RobotFailure,
                json!({"class_id": c.class_id, "reason": reason}),
            );
            self.failure = Some(reason);
        }
    }

    fn on_change(&mut self) {
        let ch = self.changes.pop_front().expect("checked");
        self.log(
            ch.t_ms,
            EventKind::StateChange,
            json!({"sensor": ch.sensor, "delta_g": ch.delta_g, "class_id": ch.class_id}),
        );
        let Some(class) = ch.class_id else {
            self.alarm(ch.t_ms, AlarmKind::UnknownChange, json!({"sensor": ch.sensor}));
            return;
        };
        if !self.predicted.contains(&class) {
            self.alarm(ch.t_ms, AlarmKind::MissedPrediction, json!({"class_id": class}));
        }
        if let Some(d) = self.awaiting_change.take() {
            if d != class {
                self.alarm(
                    ch.t_ms,
                    AlarmKind::WrongDispatch,
                    json!({"class_id": class, "dispatched": d}),
                );
            }
        }
        if !self.safeguard.expected_next_classes.contains(&class) {
            self.alarm(ch.t_ms, AlarmKind::OutOfSequence, json!({"class_id": class}));
        }
        if !self.safeguard.completed_classes.contains(&class) {
            self.safeguard.completed_classes.push(class);
        }
        self.refresh_expected();
    }

    fn decide(&self, p: &Prediction, t_ms: i64) -> &'static str {
        if p.class_id == 0 {
            return "no_intention";
        }
        if p.confidence < self.policy.min_confidence {
            return "below_confidence";
        }
        if !self.safeguard.expected_next_classes.contains(&p.class_id) {
            return "not_expected";
        }
        if let Some(last) = self.last_dispatch.get(&p.class_id) {
            if t_ms - last <= self.policy.debounce_ms {
                return "debounced";
            }
        }
        if self.awaiting_change == Some(p.class_id) {
            return "already_dispatched";
        }
        if self.in_flight.is_some() {
            return "robot_busy";
        }
        "dispatch"
    }

    fn on_prediction(&mut self, window: WindowDescriptor, result: Result<Prediction>) {
        let t_ms = window.t_end_ms;
        self.advance_to(t_ms);
        if self.failure.is_some() {
            return;
        }
        let p = match result {
            Ok(p) => p,
            Err(e) => {
                self.log(
                    t_ms,
                    EventKind::Prediction,
                    json!({"window_start_ms": window.t_start_ms, "error": e.to_string()}),
                );
                return;
            }
        };
        if p.class_id >= 1 && p.confidence >= self.policy.min_confidence {
            self.predicted.insert(p.class_id);
        }
        let decision = self.decide(&p, t_ms);
        self.log(
            t_ms,
            EventKind::Prediction,
            json!({
                "window_start_ms": window.t_start_ms,
                "class_id": p.class_id,
                "confidence": p.confidence,
                "decision": decision,
            }),
        );
        if decision == "dispatch" {
            self.dispatch(p.class_id, t_ms);
        }
    }

    fn dispatch(&mut self, class_id: u32, t_ms: i64) {
        self.log(t_ms, EventKind::Dispatch, json!({"class_id": class_id}));
        self.dispatches.push(class_id);
        self.last_dispatch.insert(class_id, t_ms);
        self.awaiting_change = Some(class_id);
        let path = &self.paths[&class_id];
        let before = self.client.now_ms();
        let failure = match self.client.execute(path, self.policy.robot_timeout_ms) {
            Ok(log) => match log.outcome {
                Outcome::Completed => None,
                Outcome::TimedOut { seq } => Some(format!("robot timed out on seq {seq}")),
            },
            Err(e) => Some(e.to_string()),
        };
        if failure.is_some() {
            // Best effort; the session ends either way.
            let _ = self.client.reset();
        }
        let duration_ms = self.client.now_ms() - before;
        self.in_flight = Some(Completion {
            t_ms: t_ms + duration_ms,
            class_id,
            duration_ms,
            failure,
        });
    }

    fn run(&mut self, rx: Receiver<(WindowDescriptor, Result<Prediction>)>) {
        self.refresh_expected();
        for (window, result) in rx {
            self.on_prediction(window, result);
            if self.failure.is_some() {
                return;
            }
        }
        self.advance_to(i64::MAX);
    }
}

/// Runs a session over `input`. Every SOP class needs a path.
pub fn run_session<T: Transport>(
    input: &SessionInput,
    classifier: &mut dyn Classifier,
    client: &mut RobotClient<T>,
    paths: &BTreeMap<u32, ExecutionPath>,
    policy: &Policy,
) -> Result<SessionLog> {
    let missing: Vec<u32> = input.sop.iter().copied().filter(|c| !paths.contains_key(c)).collect();
    if !missing.is_empty() {
        return Err(OrchestrateError::Config(format!("no execution path for classes {missing:?}")));
    }
    if !(0.0..=1.0).contains(&policy.min_confidence) || policy.queue_depth == 0 {
        return Err(OrchestrateError::Config("invalid policy".into()));
    }
    let windows = window_stream(&input.recording_id, input.duration_ms, policy.window_ms, policy.stride_ms)?;
    let mut changes: Vec<ChangeRecord> = input.changes.clone();
    changes.sort_by_key(|c| c.t_ms);

    let mut d = Dispatcher {
        client,
        paths,
        policy,
        sop: input.sop.clone(),
        changes: changes.into(),
        events: Vec::new(),
        safeguard: SafeguardState::default(),
        predicted: BTreeSet::new(),
        last_dispatch: BTreeMap::new(),
        awaiting_change: None,
        in_flight: None,
        dispatches: Vec::new(),
        failure: None,
    };

    let (win_tx, win_rx) = sync_channel::<WindowDescriptor>(policy.queue_depth);
    let (pred_tx, pred_rx) = sync_channel(policy.queue_depth);
    thread::scope(|s| {
        s.spawn(move || {
            for w in windows {
                if win_tx.send(w).is_err() {
                    break;
                }
            }
        });
        s.spawn(move || {
            for w in win_rx {
                let r = classifier.classify(&w);
                if pred_tx.send((w, r)).is_err() {
                    break;
                }
            }
        });
        // Returning drops the receiver, which stops both producers.
        d.run(pred_rx);
    });

    let outcome = match d.failure.take() {
        Some(reason) => SessionOutcome::Failed { reason },
        None => SessionOutcome::Completed,
    };
    Ok(SessionLog {
        recording_id: input.recording_id.clone(),
        events: d.events,
        dispatches: d.dispatches,
        safeguard: d.safeguard,
        outcome,
    })
}
