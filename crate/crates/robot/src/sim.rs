//! Kinematics-free robot: constant-speed straight-line motion in the pose
//! 6-vector, advanced in fixed ticks.

use serde::{Deserialize, Serialize};

use crate::pose::Pose;
use crate::proto::Message;
use crate::waypoints::default_start_pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Pose-space units per second.
    pub speed: f64,
    pub tick_ms: i64,
    pub start_pose: Pose,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            speed: 0.5,
            tick_ms: 8,
            start_pose: default_start_pose(),
        }
    }
}

impl SimConfig {
    /// Ticks needed to cover `distance`.
    pub fn ticks_for(&self, distance: f64) -> i64 {
        let per_tick = self.speed * self.tick_ms as f64 / 1000.0;
        (distance / per_tick).ceil() as i64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub current_pose: Pose,
    pub gripper_closed: bool,
    pub moving: bool,
    /// Toggled once per completed setpoint.
    pub watchdog: bool,
    pub last_seq: u64,
    pub grip_closes: u32,
    pub grip_opens: u32,
}

#[derive(Debug, Clone)]
struct Motion {
    /// `None` for a RESET move, which completes silently.
    seq: Option<u64>,
    from: Pose,
    target: Pose,
    grip: u8,
    distance: f64,
    travelled: f64,
}

#[derive(Debug, Clone)]
pub struct SimRobot {
    cfg: SimConfig,
    state: RobotState,
    motion: Option<Motion>,
}

impl SimRobot {
    pub fn new(cfg: SimConfig) -> Self {
        SimRobot {
            state: RobotState {
                current_pose: cfg.start_pose,
                gripper_closed: false,
                moving: false,
                watchdog: false,
                last_seq: 0,
                grip_closes: 0,
                grip_opens: 0,
            },
            cfg,
            motion: None,
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn is_busy(&self) -> bool {
        self.motion.is_some()
    }

    /// Seq of the setpoint currently being executed.
    pub fn in_flight(&self) -> Option<u64> {
        self.motion.as_ref().and_then(|m| m.seq)
    }

    /// Applies one incoming message; returns the replies it causes now.
    pub fn handle(&mut self, msg: Message) -> Vec<Message> {
        let mut out = Vec::new();
        match msg {
            Message::Setpoint { seq, pose, grip } => {
                let pose = match Pose::new(pose) {
                    Ok(p) if grip <= 1 => p,
                    Ok(_) => {
                        out.push(Message::Error {
                            detail: format!("seq {seq}: grip must be 0 or 1, got {grip}"),
                        });
                        return out;
                    }
                    Err(e) => {
                        out.push(Message::Error {
                            detail: format!("seq {seq}: {e}"),
                        });
                        return out;
                    }
                };
                self.supersede(&mut out);
                self.state.last_seq = seq;
                self.begin(Some(seq), pose, grip, &mut out);
            }
            Message::Reset => {
                self.supersede(&mut out);
                self.begin(None, self.cfg.start_pose, 0, &mut out);
            }
            Message::Abort { .. } => {
                if let Some(m) = self.motion.take() {
                    self.state.moving = false;
                    if let Some(seq) = m.seq {
                        out.push(Message::Abort { seq: Some(seq) });
                    }
                }
            }
            other => out.push(Message::Error {
                detail: format!("unexpected message from client: {other:?}"),
            }),
        }
        out
    }

    /// Advances one tick.
    pub fn tick(&mut self) -> Vec<Message> {
        let mut out = Vec::new();
        let step = self.cfg.speed * self.cfg.tick_ms as f64 / 1000.0;
        let Some(m) = self.motion.as_mut() else {
            return out;
        };
        m.travelled += step;
        if m.travelled + 1e-12 >= m.distance {
            let m = self.motion.take().expect("motion present");
            self.arrive(m, &mut out);
        } else {
            self.state.current_pose = m.from.lerp(&m.target, m.travelled / m.distance);
        }
        out
    }

    fn supersede(&mut self, out: &mut Vec<Message>) {
        if let Some(Motion { seq: Some(seq), .. }) = self.motion.take() {
            out.push(Message::Superseded { seq });
        }
        self.motion = None;
    }

    fn begin(&mut self, seq: Option<u64>, target: Pose, grip: u8, out: &mut Vec<Message>) {
        let from = self.state.current_pose;
        let motion = Motion {
            seq,
            from,
            target,
            grip,
            distance: from.distance(&target),
            travelled: 0.0,
        };
        if motion.distance == 0.0 {
            self.arrive(motion, out);
        } else {
            self.state.moving = true;
            self.motion = Some(motion);
        }
    }

    fn arrive(&mut self, m: Motion, out: &mut Vec<Message>) {
        self.state.current_pose = m.target;
        self.state.moving = false;
        let close = m.grip == 1;
        if close && !self.state.gripper_closed {
            self.state.grip_closes += 1;
        }
        if !close && self.state.gripper_closed {
            self.state.grip_opens += 1;
        }
        self.state.gripper_closed = close;
        if let Some(seq) = m.seq {
            self.state.watchdog = !self.state.watchdog;
            out.push(Message::Done { seq });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(seq: u64, pose: [f64; 6], grip: u8) -> Message {
        Message::Setpoint { seq, pose, grip }
    }

    #[test]
    fn zero_distance_done_immediately() {
        let mut r = SimRobot::new(SimConfig::default());
        let here = r.state().current_pose.to_array();
        assert_eq!(r.handle(sp(1, here, 1)), vec![Message::Done { seq: 1 }]);
        assert!(r.state().gripper_closed);
        assert!(r.state().watchdog);
        assert!(!r.state().moving);
    }

    #[test]
    fn latest_wins() {
        let mut r = SimRobot::new(SimConfig::default());
        let mut far = r.state().current_pose.to_array();
        far[0] += 0.5;
        assert!(r.handle(sp(1, far, 0)).is_empty());
        far[1] += 0.5;
        assert_eq!(r.handle(sp(2, far, 0)), vec![Message::Superseded { seq: 1 }]);
        let mut replies = Vec::new();
        while r.is_busy() {
            replies.extend(r.tick());
        }
        assert_eq!(replies, vec![Message::Done { seq: 2 }]);
    }

    #[test]
    fn travel_time_matches_distance_over_speed() {
        let cfg = SimConfig::default();
        let mut r = SimRobot::new(cfg);
        let mut target = r.state().current_pose.to_array();
        target[2] -= 0.3;
        r.handle(sp(1, target, 0));
        let mut ticks = 0;
        while r.is_busy() {
            r.tick();
            ticks += 1;
        }
        let expect_ms = 0.3 / cfg.speed * 1000.0;
        assert!(((ticks * cfg.tick_ms) as f64 - expect_ms).abs() <= cfg.tick_ms as f64);
    }

    #[test]
    fn reset_and_abort() {
        let mut r = SimRobot::new(SimConfig::default());
        let mut target = r.state().current_pose.to_array();
        target[0] += 0.2;
        r.handle(sp(1, target, 1));
        while r.is_busy() {
            r.tick();
        }
        assert!(r.state().gripper_closed);
        target[0] += 0.2;
        r.handle(sp(2, target, 1));
        assert_eq!(r.handle(Message::Reset), vec![Message::Superseded { seq: 2 }]);
        let mut replies = Vec::new();
        while r.is_busy() {
            replies.extend(r.tick());
        }
        assert!(replies.is_empty());
        assert!(!r.state().gripper_closed);
        assert_eq!(r.state().current_pose, SimConfig::default().start_pose);

        r.handle(sp(3, target, 0));
        r.tick();
        assert_eq!(r.handle(Message::Abort { seq: None }), vec![Message::Abort { seq: Some(3) }]);
        assert!(r.handle(Message::Abort { seq: None }).is_empty());
        assert!(!r.state().moving);
    }

    #[test]
    fn invalid_setpoint_rejected() {
        let mut r = SimRobot::new(SimConfig::default());
        let out = r.handle(sp(1, [0.0, 0.0, 0.0, 4.0, 0.0, 0.0], 0));
        assert!(matches!(out[..], [Message::Error { .. }]));
        let out = r.handle(sp(2, [0.0; 6], 2));
        assert!(matches!(out[..], [Message::Error { .. }]));
        assert!(!r.is_busy());
    }
}
