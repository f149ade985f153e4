//! Randomized execution paths against the simulated robot over a faulty
//! link, with every protocol invariant checked per trial.

use serde::{Deserialize, Serialize};
use slb_core::rng::PortableRng;

use crate::client::{Outcome, RobotClient};
use crate::error::RobotError;
use crate::invariants::{check_replies, check_rest_state, Violation};
use crate::link::{FaultProfile, SimLink};
use crate::pose::{ExecutionPath, Pose, Setpoint, StepType};
use crate::proto::Message;
use crate::sim::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub trials: usize,
    pub seed: u64,
    pub timeout_ms: i64,
    pub delay_prob: f64,
    pub duplicate_prob: f64,
    /// Paths executed back to back on one connection.
    pub paths_per_trial: usize,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            trials: 1000,
            seed: 42,
            timeout_ms: 3000,
            delay_prob: 0.3,
            duplicate_prob: 0.2,
            paths_per_trial: 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trials: usize,
    pub paths: usize,
    pub completed: usize,
    pub timed_out: usize,
    pub protocol_errors: usize,
    pub violations: Vec<(usize, Violation)>,
    /// Completed logs that claim a DONE the robot never sent for that seq.
    pub misattributed: usize,
}

impl TrialReport {
    pub fn clean(&self) -> bool {
        self.violations.is_empty() && self.misattributed == 0
    }
}

fn random_pose(rng: &mut PortableRng) -> Pose {
    Pose {
        x: rng.uniform_range(-0.5, 0.5),
        y: rng.uniform_range(-0.6, 0.2),
        z: rng.uniform_range(0.02, 0.6),
        rx: rng.uniform_range(2.5, 3.1),
        ry: rng.uniform_range(-0.3, 0.3),
        rz: rng.uniform_range(-0.3, 0.3),
    }
}

/// A path in the calibrated shape with random waypoints, ending at `rest`.
pub fn random_path(rng: &mut PortableRng, class: u32, start: Pose) -> ExecutionPath {
    let mut setpoints = vec![Setpoint {
        pose: start,
        grip: 0,
        step_type: StepType::Start,
    }];
    for _ in 0..rng.int_range(1, 3) {
        setpoints.push(Setpoint {
            pose: random_pose(rng),
            grip: 0,
            step_type: StepType::Approach,
        });
    }
    setpoints.push(Setpoint {
        pose: random_pose(rng),
        grip: 1,
        step_type: StepType::GripStep,
    });
    for _ in 0..rng.int_range(0, 2) {
        setpoints.push(Setpoint {
            pose: random_pose(rng),
            grip: 1,
            step_type: StepType::PostPickup,
        });
    }
    setpoints.push(Setpoint {
        pose: random_pose(rng),
        grip: 1,
        step_type: StepType::Handoff,
    });
    setpoints.push(Setpoint {
        pose: start,
        grip: 0,
        step_type: StepType::Reset,
    });
    ExecutionPath {
        intention_class: class,
        setpoints,
    }
}

pub fn run_fault_trials(cfg: &TrialConfig) -> TrialReport {
    let sim = SimConfig::default();
    let mut report = TrialReport {
        trials: cfg.trials,
        ..TrialReport::default()
    };
    for trial in 0..cfg.trials {
        let mut rng = PortableRng::derive(cfg.seed, trial as u64);
        let faults = FaultProfile {
            latency_ms: rng.int_range(1, 5),
            delay_prob: cfg.delay_prob,
            max_delay_ms: 2 * cfg.timeout_ms,
            duplicate_prob: cfg.duplicate_prob,
        };
        let link = SimLink::new(sim, faults, rng.next_u64());
        let mut client = RobotClient::new(link);
        let mut rest_expected = true;
        for _ in 0..cfg.paths_per_trial {
            let class = rng.int_range(1, 13) as u32;
            let path = random_path(&mut rng, class, sim.start_pose);
            report.paths += 1;
            match client.execute(&path, cfg.timeout_ms) {
                Ok(log) if log.outcome == Outcome::Completed => {
                    report.completed += 1;
                    let emitted = &client.transport().emitted;
                    for e in &log.entries {
                        let sent_before = emitted
                            .iter()
                            .any(|(t, m)| *m == Message::Done { seq: e.seq } && *t <= e.done_t_ms);
                        if !sent_before {
                            report.misattributed += 1;
                        }
                    }
                    let seqs: Vec<u64> = log.entries.iter().map(|e| e.seq).collect();
                    if seqs.windows(2).any(|p| p[1] != p[0] + 1) {
                        report.misattributed += 1;
                    }
                }
                Ok(_) => {
                    report.timed_out += 1;
                    client.reset().expect("sim link send");
                    rest_expected = false;
                }
                Err(RobotError::Protocol(_)) => {
                    report.protocol_errors += 1;
                    client.reset().expect("sim link send");
                    rest_expected = false;
                    break;
                }
                Err(e) => panic!("unexpected error on a simulated link: {e}"),
            }
        }
        let mut link = client.into_transport();
        link.settle();
        if !rest_expected {
            // A RESET was sent; it completes silently at the start pose.
            link.settle();
        }
        let received: Vec<Message> = link.received.iter().map(|(_, m)| m.clone()).collect();
        let emitted: Vec<Message> = link.emitted.iter().map(|(_, m)| m.clone()).collect();
        for v in check_replies(&received, &emitted, true) {
            report.violations.push((trial, v));
        }
        for v in check_rest_state(link.robot().state(), &sim.start_pose) {
            report.violations.push((trial, v));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_is_clean_and_exercises_faults() {
        let report = run_fault_trials(&TrialConfig {
            trials: 60,
            ..TrialConfig::default()
        });
        assert!(report.clean(), "{:?}", report.violations);
        assert!(report.completed > 0);
        assert!(report.timed_out + report.protocol_errors > 0);
    }

    #[test]
    fn no_faults_all_complete() {
        let report = run_fault_trials(&TrialConfig {
            trials: 20,
            delay_prob: 0.0,
            duplicate_prob: 0.0,
            ..TrialConfig::default()
        });
        assert_eq!(report.completed, report.paths);
        assert!(report.clean());
    }
}
