#![allow(dead_code)]

use std::collections::BTreeMap;

use slb_core::detect::DetectorConfig;
use slb_core::synthgen::{generate_recording, GroundTruth, ScenarioConfig};
use slb_orchestrate::session::SessionInput;
use slb_robot::link::{FaultProfile, SimLink};
use slb_robot::waypoints::{load_waypoints, write_default_calibration};
use slb_robot::{ExecutionPath, RobotClient, SimConfig};

pub fn paths() -> BTreeMap<u32, ExecutionPath> {
    let dir = tempfile::tempdir().unwrap();
    write_default_calibration(dir.path(), 13).unwrap();
    load_waypoints(dir.path()).unwrap()
}

pub fn scenario(cfg: &ScenarioConfig, index: usize) -> (SessionInput, GroundTruth) {
    let (rec, truth) = generate_recording(cfg, index).unwrap();
    let input = SessionInput::from_recording(&rec, &cfg.catalog, &DetectorConfig::default()).unwrap();
    (input, truth)
}

pub fn sim_client() -> RobotClient<SimLink> {
    RobotClient::new(SimLink::new(SimConfig::default(), FaultProfile::none(), 0))
}
