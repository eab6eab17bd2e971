//! T-pose calibration: per-tracker rotational offsets and a height scale.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::RuntimeError;
use crate::features::{TrackerFrame, TRACKER_COUNT};
use crate::motion::{fk, rot_to_6d, sixdof_to_rot, Pose, Rotation, Side, SixDof, Skeleton};

/// Frame-to-frame tracker motion allowed while capturing the T-pose.
pub const MAX_TPOSE_MOTION: f64 = 0.01;

/// Offsets are in tracker order (head, left hand, right hand, pelvis) and
/// are right-multiplied onto the tracked orientations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StoredCalibration", into = "StoredCalibration")]
pub struct Calibration {
    pub offsets: [Rotation; TRACKER_COUNT],
    pub height_scale: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            offsets: [Rotation::identity(); TRACKER_COUNT],
            height_scale: 1.0,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredCalibration {
    /// Forward and up axes per tracker.
    offsets: [[f64; 6]; TRACKER_COUNT],
    height_scale: f64,
}

impl From<Calibration> for StoredCalibration {
    fn from(c: Calibration) -> Self {
        Self {
            offsets: c.offsets.map(|r| rot_to_6d(&r).to_array()),
            height_scale: c.height_scale,
        }
    }
}

impl TryFrom<StoredCalibration> for Calibration {
    type Error = String;

    fn try_from(s: StoredCalibration) -> Result<Self, String> {
        if !(s.height_scale > 0.0 && s.height_scale.is_finite()) {
            return Err(format!("height scale must be positive, got {}", s.height_scale));
        }
        let mut offsets = [Rotation::identity(); TRACKER_COUNT];
        for (o, v) in offsets.iter_mut().zip(&s.offsets) {
            *o = sixdof_to_rot(&SixDof::from_slice(v)).map_err(|e| e.to_string())?;
        }
        Ok(Self {
            offsets,
            height_scale: s.height_scale,
        })
    }
}

impl Calibration {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("calibration serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, RuntimeError> {
        serde_json::from_str(text).map_err(|e| RuntimeError::Calibration(e.to_string()))
    }
}

/// Root height above the lower toe-base with every joint at rest.
pub fn rest_pelvis_height(skeleton: &Skeleton) -> Result<f64, RuntimeError> {
    let rig = skeleton.rig()?;
    let world = fk(skeleton, &Pose::identity(skeleton));
    let lowest = Side::BOTH
        .iter()
        .map(|s| world[rig.toe(*s)].position.y)
        .fold(f64::INFINITY, f64::min);
    Ok(world[0].position.y - lowest)
}

/// Offsets that turn each tracked orientation into its joint's rest
/// orientation, and the ratio of rest to tracked pelvis height.
pub fn calibrate(tpose: &TrackerFrame, skeleton: &Skeleton) -> Result<Calibration, RuntimeError> {
    if !tpose.is_finite() {
        return Err(RuntimeError::Calibration("T-pose frame is not finite".into()));
    }
    let tracked_height = tpose.pelvis.position.y;
    if tracked_height <= 0.0 {
        return Err(RuntimeError::Calibration(format!(
            "pelvis height must be positive, got {tracked_height}"
        )));
    }
    let rig = skeleton.rig()?;
    let world = fk(skeleton, &Pose::identity(skeleton));
    let joints = [rig.head, rig.left_hand, rig.right_hand, 0];
    let mut offsets = [Rotation::identity(); TRACKER_COUNT];
    for ((o, t), j) in offsets.iter_mut().zip(tpose.trackers()).zip(joints) {
        *o = t.rotation.inverse() * world[j].rotation;
    }
    Ok(Calibration {
        offsets,
        height_scale: rest_pelvis_height(skeleton)? / tracked_height,
    })
}

/// Calibrates from a short T-pose capture, rejecting it if any tracker moves
/// more than 1 cm between consecutive frames. The last frame is used.
pub fn calibrate_recording(frames: &[TrackerFrame], skeleton: &Skeleton) -> Result<Calibration, RuntimeError> {
    let last = frames
        .last()
        .ok_or_else(|| RuntimeError::Calibration("empty T-pose capture".into()))?;
    for (i, w) in frames.windows(2).enumerate() {
        for (a, b) in w[0].trackers().iter().zip(w[1].trackers()) {
            let d: Vector3<f64> = b.position - a.position;
            if !(d.norm() < MAX_TPOSE_MOTION) {
                return Err(RuntimeError::Calibration(format!(
                    "trackers moved {:.1} cm at frame {}; hold still during calibration",
                    d.norm() * 100.0,
                    i + 1
                )));
            }
        }
    }
    calibrate(last, skeleton)
}

/// Right-multiplies each orientation by its offset. Positions are untouched;
/// the height scale is applied by the session when building features.
pub fn apply_calibration(frame: &TrackerFrame, cal: &Calibration) -> TrackerFrame {
    let mut out = *frame;
    for (t, o) in out.trackers_mut().into_iter().zip(&cal.offsets) {
        t.rotation = t.rotation * *o;
    }
    out
}
