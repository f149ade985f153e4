//! Calibration CSVs: one file per step type, one row per recorded pose.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::f64::consts::PI;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Result, RobotError};
use crate::pose::{ExecutionPath, Pose, Setpoint, StepType};

pub const HEADER: &str = "intention_class,step_type,x,y,z,rx,ry,rz";

/// Where a recorded pose comes from. On the real cell this is the robot's
/// live TCP while it is moved in freedrive.
pub trait PoseSource {
    fn current_pose(&mut self) -> Result<Pose>;
}

/// A prerecorded freedrive session, replayed pose by pose.
#[derive(Debug, Clone, Default)]
pub struct ScriptedFeed {
    poses: VecDeque<Pose>,
}

impl ScriptedFeed {
    pub fn new(poses: impl IntoIterator<Item = Pose>) -> Self {
        ScriptedFeed {
            poses: poses.into_iter().collect(),
        }
    }
}

impl PoseSource for ScriptedFeed {
    fn current_pose(&mut self) -> Result<Pose> {
        self.poses
            .pop_front()
            .ok_or_else(|| RobotError::Pose("pose feed exhausted".into()))
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    intention_class: u32,
    step_type: StepType,
    x: f64,
    y: f64,
    z: f64,
    rx: f64,
    ry: f64,
    rz: f64,
}

/// Appends the source's current pose as one row, writing the header first
/// if the file is new or empty.
pub fn record_waypoint(
    source: &mut dyn PoseSource,
    intention_class: u32,
    step_type: StepType,
    csv_path: &Path,
) -> Result<()> {
    let pose = source.current_pose()?;
    pose.validate()?;
    if let Some(parent) = csv_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| RobotError::io(parent, e))?;
        }
    }
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(csv_path)
        .map_err(|e| RobotError::io(csv_path, e))?;
    let empty = file
        .metadata()
        .map_err(|e| RobotError::io(csv_path, e))?
        .len()
        == 0;
    let mut line = String::new();
    if empty {
        line.push_str(HEADER);
        line.push('\n');
    }
    line.push_str(&format!("{intention_class},{}", step_type.as_str()));
    for v in pose.to_array() {
        // 16 significant digits.
        line.push_str(&format!(",{v:.15e}"));
    }
    line.push('\n');
    file.write_all(line.as_bytes())
        .map_err(|e| RobotError::io(csv_path, e))
}

/// Rows of one calibration file in file order. A missing file has no rows.
pub fn read_waypoint_file(path: &Path, expected: StepType) -> Result<Vec<(u32, Pose)>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let parse_err = |line: u64, message: String| RobotError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(0, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>().join(",") != HEADER {
        return Err(parse_err(1, format!("expected header {HEADER}")));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: Row = record
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(line, e.to_string()))?;
        if row.step_type != expected {
            return Err(parse_err(
                line,
                format!("step_type {} in the {} file", row.step_type.as_str(), expected.as_str()),
            ));
        }
        let pose = Pose::new([row.x, row.y, row.z, row.rx, row.ry, row.rz])
            .map_err(|e| parse_err(line, e.to_string()))?;
        out.push((row.intention_class, pose));
    }
    Ok(out)
}

/// Builds one execution path per intention class from a calibration
/// directory.
///
/// Start rows with class 0 apply to every class without its own start row.
/// Grip is closed from the grip step through the handoff.
pub fn load_waypoints(dir: &Path) -> Result<BTreeMap<u32, ExecutionPath>> {
    let mut rows: BTreeMap<StepType, Vec<(u32, Pose)>> = BTreeMap::new();
    for step in StepType::ALL {
        rows.insert(step, read_waypoint_file(&dir.join(step.file_name()), step)?);
    }
    let classes: BTreeSet<u32> = rows
        .iter()
        .filter(|(step, _)| **step != StepType::Start)
        .flat_map(|(_, r)| r.iter().map(|(c, _)| *c))
        .filter(|c| *c != 0)
        .collect();
    if classes.is_empty() {
        return Err(RobotError::Path {
            classes: vec![],
            message: format!("no waypoints found in {}", dir.display()),
        });
    }

    let poses = |step: StepType, class: u32| -> Vec<Pose> {
        rows[&step]
            .iter()
            .filter(|(c, _)| *c == class)
            .map(|(_, p)| *p)
            .collect()
    };

    // Collect every class's problem per step so one error lists them all.
    let mut problems: BTreeMap<String, Vec<u32>> = BTreeMap::new();
    let mut paths = BTreeMap::new();
    for &class in &classes {
        let mut start = poses(StepType::Start, class);
        if start.is_empty() {
            start = poses(StepType::Start, 0);
        }
        let approach = poses(StepType::Approach, class);
        let grip = poses(StepType::GripStep, class);
        let post = poses(StepType::PostPickup, class);
        let handoff = poses(StepType::Handoff, class);
        let reset = poses(StepType::Reset, class);
        let mut ok = true;
        for (step, found) in [
            (StepType::Start, start.len()),
            (StepType::GripStep, grip.len()),
            (StepType::Handoff, handoff.len()),
            (StepType::Reset, reset.len()),
        ] {
            if found != 1 {
                let what = if found == 0 { "missing" } else { "repeated" };
                problems
                    .entry(format!("{what} {} waypoint", step.as_str()))
                    .or_default()
                    .push(class);
                ok = false;
            }
        }
        if approach.is_empty() {
            problems
                .entry("missing approach waypoint".into())
                .or_default()
                .push(class);
            ok = false;
        }
        if !ok {
            continue;
        }

        let mut setpoints = Vec::new();
        let mut push = |pose: Pose, grip: u8, step_type: StepType| {
            setpoints.push(Setpoint {
                pose,
                grip,
                step_type,
            })
        };
        push(start[0], 0, StepType::Start);
        for p in approach {
            push(p, 0, StepType::Approach);
        }
        push(grip[0], 1, StepType::GripStep);
        for p in post {
            push(p, 1, StepType::PostPickup);
        }
        push(handoff[0], 1, StepType::Handoff);
        push(reset[0], 0, StepType::Reset);
        let path = ExecutionPath {
            intention_class: class,
            setpoints,
        };
        path.validate()?;
        paths.insert(class, path);
    }

    if let Some((message, classes)) = problems.into_iter().next() {
        return Err(RobotError::Path { classes, message });
    }
    Ok(paths)
}

/// The standardized, fully extended start pose of the default cell.
pub fn default_start_pose() -> Pose {
    Pose {
        x: 0.0,
        y: -0.45,
        z: 0.55,
        rx: PI,
        ry: 0.0,
        rz: 0.0,
    }
}

/// A freedrive session for the default 13-part chair cell: the recorded
/// `(class, step, pose)` sequence.
pub fn default_calibration_script(num_classes: u32) -> Vec<(u32, StepType, Pose)> {
    let start = default_start_pose();
    let handoff = Pose {
        x: 0.45,
        y: 0.1,
        z: 0.35,
        rx: PI,
        ry: 0.0,
        rz: 0.0,
    };
    let mut out = vec![(0, StepType::Start, start)];
    for class in 1..=num_classes {
        // Parts sit on a 4-wide grid across two trays.
        let k = (class - 1) as f64;
        let x = -0.3 + 0.12 * (k % 4.0);
        let y = -0.25 - 0.1 * (k / 4.0).floor();
        let at = |z: f64| Pose {
            x,
            y,
            z,
            rx: PI,
            ry: 0.0,
            rz: 0.0,
        };
        out.push((class, StepType::Approach, at(0.30)));
        if class % 3 == 0 {
            out.push((class, StepType::Approach, at(0.15)));
        }
        out.push((class, StepType::GripStep, at(0.04)));
        if class % 2 == 0 {
            out.push((class, StepType::PostPickup, at(0.25)));
        }
        out.push((class, StepType::Handoff, handoff));
        out.push((class, StepType::Reset, start));
    }
    out
}

/// Records the default calibration into `dir` through a scripted feed.
pub fn write_default_calibration(dir: &Path, num_classes: u32) -> Result<()> {
    let script = default_calibration_script(num_classes);
    let mut feed = ScriptedFeed::new(script.iter().map(|(_, _, p)| *p));
    for (class, step, _) in &script {
        record_waypoint(&mut feed, *class, *step, &dir.join(step.file_name()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::matches_pattern;

    fn pose(x: f64) -> Pose {
        Pose::new([x, 0.1234567891, -0.5, 0.0, PI / 2.0, 0.0]).unwrap()
    }

    #[test]
    fn record_appends_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("approach.csv");
        let mut feed = ScriptedFeed::new([pose(0.1)]);
        record_waypoint(&mut feed, 2, StepType::Approach, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().next().unwrap(), HEADER);

        let mut feed = ScriptedFeed::new((0..4).map(|i| pose(i as f64)));
        for _ in 0..4 {
            record_waypoint(&mut feed, 3, StepType::Approach, &path).unwrap();
        }
        let rows = read_waypoint_file(&path, StepType::Approach).unwrap();
        assert_eq!(rows.len(), 5);
        let xs: Vec<f64> = rows[1..].iter().map(|(_, p)| p.x).collect();
        assert_eq!(xs, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn unwritable_path_errors() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let mut feed = ScriptedFeed::new([pose(0.0)]);
        let err = record_waypoint(&mut feed, 1, StepType::Approach, &blocker.join("a.csv"));
        assert!(matches!(err, Err(RobotError::Io { .. })));
    }

    #[test]
    fn minimal_class_grip_pattern() {
        let dir = tempfile::tempdir().unwrap();
        let script = [
            (0, StepType::Start, pose(0.0)),
            (5, StepType::Approach, pose(1.0)),
            (5, StepType::GripStep, pose(2.0)),
            (5, StepType::Handoff, pose(3.0)),
            (5, StepType::Reset, pose(4.0)),
        ];
        let mut feed = ScriptedFeed::new(script.iter().map(|s| s.2));
        for (c, step, _) in &script {
            record_waypoint(&mut feed, *c, *step, &dir.path().join(step.file_name())).unwrap();
        }
        let paths = load_waypoints(dir.path()).unwrap();
        let path = &paths[&5];
        assert_eq!(path.setpoints.len(), 5);
        let grips: Vec<u8> = path.setpoints.iter().map(|s| s.grip).collect();
        assert_eq!(grips, vec![0, 0, 1, 1, 0]);
        for (sp, (_, _, p)) in path.setpoints.iter().zip(&script) {
            for (a, b) in sp.pose.to_array().iter().zip(p.to_array()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn missing_handoff_lists_classes() {
        let dir = tempfile::tempdir().unwrap();
        write_default_calibration(dir.path(), 4).unwrap();
        fs::remove_file(dir.path().join("handoff.csv")).unwrap();
        match load_waypoints(dir.path()) {
            Err(RobotError::Path { classes, message }) => {
                assert_eq!(classes, vec![1, 2, 3, 4]);
                assert!(message.contains("handoff"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grip.csv");
        fs::write(
            &path,
            format!("{HEADER}\n1,grip_step,0,0,0,0,0,0\n2,grip_step,0,zero,0,0,0,0\n"),
        )
        .unwrap();
        match read_waypoint_file(&path, StepType::GripStep) {
            Err(RobotError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn default_calibration_has_thirteen_valid_paths() {
        let dir = tempfile::tempdir().unwrap();
        write_default_calibration(dir.path(), 13).unwrap();
        let paths = load_waypoints(dir.path()).unwrap();
        assert_eq!(paths.len(), 13);
        for path in paths.values() {
            assert!(matches_pattern(&path.step_types()));
            assert_eq!(path.setpoints[0].pose, default_start_pose());
        }
    }
}
