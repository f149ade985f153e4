//! Robot, annotation and session subcommands.

use std::fs;
use std::net::TcpListener;
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Mutex};

use anyhow::{bail, ensure, Context, Result};
use serde_json::{json, Value};
use slb_core::corpus;
use slb_core::detect::DetectorConfig;
use slb_orchestrate::classify::{Classifier, NoisyClassifier, OracleClassifier, ScriptedClassifier, StubConfig, StubMode};
use slb_orchestrate::{run_session, Policy, SequenceMode, SessionInput, SessionLog};
use slb_robot::link::{FaultProfile, SimLink};
use slb_robot::pose::StepType;
use slb_robot::waypoints::{load_waypoints, write_default_calibration};
use slb_robot::{RobotClient, SimConfig, SimRobot, TcpTransport, Transport};

use crate::pipeline::labels_for;
use crate::{CalibrateArgs, RunSessionArgs, ServeAnnotationArgs, ServeRobotArgs};

pub fn serve_annotation(a: &ServeAnnotationArgs) -> Result<()> {
    let mut cfg = slb_annotate::ServiceConfig::new(&a.corpus);
    cfg.labels_dir = a.labels.clone();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port))
            .await
            .with_context(|| format!("binding {}:{}", a.host, a.port))?;
        println!("{}", json!({"listening": listener.local_addr()?.to_string()}));
        slb_annotate::serve(listener, cfg).await?;
        Ok(())
    })
}

pub fn serve_robot(a: &ServeRobotArgs) -> Result<()> {
    ensure!(a.speed > 0.0 && a.tick_ms > 0 && a.time_scale > 0.0, "speed, tick and time scale must be positive");
    let cfg = SimConfig {
        speed: a.speed,
        tick_ms: a.tick_ms,
        ..SimConfig::default()
    };
    let listener = TcpListener::bind((a.host.as_str(), a.port)).with_context(|| format!("binding {}:{}", a.host, a.port))?;
    println!("{}", json!({"listening": listener.local_addr()?.to_string()}));
    let snapshot = Arc::new(Mutex::new(SimRobot::new(cfg).state().clone()));
    slb_robot::server::serve(listener, cfg, a.time_scale, Arc::new(AtomicBool::new(false)), snapshot)?;
    Ok(())
}

pub fn calibrate(a: &CalibrateArgs) -> Result<Value> {
    ensure!(a.classes >= 1, "--classes must be at least 1");
    let existing: Vec<_> = StepType::ALL
        .iter()
        .map(|s| a.out.join(s.file_name()))
        .filter(|p| p.exists())
        .collect();
    if !existing.is_empty() {
        ensure!(a.force, "{} already holds waypoint files (use --force)", a.out.display());
        for p in existing {
            fs::remove_file(p)?;
        }
    }
    write_default_calibration(&a.out, a.classes)?;
    let paths = load_waypoints(&a.out)?;
    Ok(json!({"classes": paths.len(), "out": a.out}))
}

fn classifier(a: &RunSessionArgs, num_classes: u32) -> Result<Box<dyn Classifier>> {
    let truth = || -> Result<Vec<slb_core::labels::IntentionLabel>> {
        let dir = a.labels.clone().unwrap_or_else(|| a.corpus.join(corpus::TRUTH_DIR));
        let file = labels_for(&dir, &a.recording)?
            .with_context(|| format!("no labels for {} in {}", a.recording, dir.display()))?;
        Ok(file.labels)
    };
    let spec = a.classifier.as_str();
    if spec == "oracle" {
        return Ok(Box::new(OracleClassifier::new(truth()?)));
    }
    if let Some(acc) = spec.strip_prefix("noisy:") {
        let per_class_accuracy: f64 = acc.parse().with_context(|| format!("bad accuracy {acc:?}"))?;
        let seed = a.seed.context("noisy classifiers need --seed")?;
        let cfg = StubConfig {
            mode: StubMode::Noisy,
            per_class_accuracy,
            seed,
        };
        return Ok(Box::new(NoisyClassifier::new(truth()?, num_classes, &cfg)?));
    }
    if let Some(path) = spec.strip_prefix("scripted:") {
        return Ok(Box::new(ScriptedClassifier::load(path.as_ref())?));
    }
    bail!("unknown classifier {spec:?}; expected oracle, noisy:<accuracy> or scripted:<file>")
}

fn session_with<T: Transport>(
    input: &SessionInput,
    c: &mut dyn Classifier,
    transport: T,
    a: &RunSessionArgs,
    policy: &Policy,
) -> Result<SessionLog> {
    let paths = load_waypoints(&a.waypoints)?;
    let mut client = RobotClient::new(transport);
    Ok(run_session(input, c, &mut client, &paths, policy)?)
}

pub fn run(a: &RunSessionArgs) -> Result<Value> {
    let mode = match a.mode.as_str() {
        "strict" => SequenceMode::Strict,
        "any" => SequenceMode::AnyRemaining,
        other => bail!("unknown mode {other:?}; expected strict or any"),
    };
    let policy = Policy {
        mode,
        min_confidence: a.min_confidence,
        ..Policy::default()
    };
    let detector = match &a.detector {
        Some(p) => DetectorConfig::load(p)?,
        None => DetectorConfig::default(),
    };
    let catalog = corpus::load_catalog(&a.corpus)?;
    let rec = corpus::load_recording(&a.corpus, &a.recording)?.recording;
    let input = SessionInput::from_recording(&rec, &catalog, &detector)?;
    let mut c = classifier(a, catalog.num_intentions())?;
    let log = if a.robot == "sim" {
        let link = SimLink::new(SimConfig::default(), FaultProfile::none(), 0);
        session_with(&input, c.as_mut(), link, a, &policy)?
    } else {
        let t = TcpTransport::connect(a.robot.as_str()).with_context(|| format!("connecting to {}", a.robot))?;
        session_with(&input, c.as_mut(), t, a, &policy)?
    };
    log.write_jsonl(&a.out)?;
    Ok(json!({
        "recording_id": log.recording_id,
        "dispatches": log.dispatches,
        "alarms": log.safeguard.alarms.len(),
        "outcome": log.outcome,
    }))
}
