use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RobotError};

/// Tool centre point: position in metres, orientation as an axis-angle
/// rotation vector in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
}

impl Pose {
    pub fn new(v: [f64; 6]) -> Result<Self> {
        let p = Pose {
            x: v[0],
            y: v[1],
            z: v[2],
            rx: v[3],
            ry: v[4],
            rz: v[5],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.to_array();
        if v.iter().any(|c| !c.is_finite()) {
            return Err(RobotError::Pose(format!("non-finite component in {v:?}")));
        }
        let angle = (self.rx * self.rx + self.ry * self.ry + self.rz * self.rz).sqrt();
        if angle > PI + 1e-9 {
            return Err(RobotError::Pose(format!(
                "rotation vector length {angle} exceeds pi"
            )));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.rx, self.ry, self.rz]
    }

    /// Straight-line distance in the 6-vector.
    pub fn distance(&self, other: &Pose) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Point `frac` of the way from `self` to `other`.
    pub fn lerp(&self, other: &Pose, frac: f64) -> Pose {
        let a = self.to_array();
        let b = other.to_array();
        let mut out = [0.0; 6];
        for i in 0..6 {
            out[i] = a[i] + (b[i] - a[i]) * frac;
        }
        Pose {
            x: out[0],
            y: out[1],
            z: out[2],
            rx: out[3],
            ry: out[4],
            rz: out[5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepType {
    /// The standardized, fully extended start pose.
    Start,
    Approach,
    GripStep,
    PostPickup,
    Handoff,
    Reset,
}

impl StepType {
    pub const ALL: [StepType; 6] = [
        StepType::Start,
        StepType::Approach,
        StepType::GripStep,
        StepType::PostPickup,
        StepType::Handoff,
        StepType::Reset,
    ];

    /// Calibration file holding this step type.
    pub fn file_name(self) -> &'static str {
        match self {
            StepType::Start => "start.csv",
            StepType::Approach => "approach.csv",
            StepType::GripStep => "grip.csv",
            StepType::PostPickup => "post_pickup.csv",
            StepType::Handoff => "handoff.csv",
            StepType::Reset => "reset.csv",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StepType::Start => "start",
            StepType::Approach => "approach",
            StepType::GripStep => "grip_step",
            StepType::PostPickup => "post_pickup",
            StepType::Handoff => "handoff",
            StepType::Reset => "reset",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setpoint {
    pub pose: Pose,
    pub grip: u8,
    pub step_type: StepType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionPath {
    pub intention_class: u32,
    pub setpoints: Vec<Setpoint>,
}

/// Whether `steps` reads `start approach+ grip_step post_pickup* handoff reset`.
pub fn matches_pattern(steps: &[StepType]) -> bool {
    use StepType::*;
    let mut it = steps.iter().peekable();
    if it.next() != Some(&Start) {
        return false;
    }
    let mut approaches = 0;
    while it.next_if_eq(&&Approach).is_some() {
        approaches += 1;
    }
    if approaches == 0 || it.next() != Some(&GripStep) {
        return false;
    }
    while it.next_if_eq(&&PostPickup).is_some() {}
    it.next() == Some(&Handoff) && it.next() == Some(&Reset) && it.next().is_none()
}

impl ExecutionPath {
    pub fn step_types(&self) -> Vec<StepType> {
        self.setpoints.iter().map(|s| s.step_type).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let path_err = |message: String| RobotError::Path {
            classes: vec![self.intention_class],
            message,
        };
        if !matches_pattern(&self.step_types()) {
            return Err(path_err(format!(
                "step sequence {:?} does not match start approach+ grip_step post_pickup* handoff reset",
                self.step_types()
            )));
        }
        for sp in &self.setpoints {
            sp.pose.validate()?;
            if sp.grip > 1 {
                return Err(path_err(format!("grip flag {} is not 0 or 1", sp.grip)));
            }
        }
        Ok(())
    }

    pub fn reset_pose(&self) -> Option<Pose> {
        self.setpoints.last().map(|s| s.pose)
    }
}
