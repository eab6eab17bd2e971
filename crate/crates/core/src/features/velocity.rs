//! Reference-frame velocities of the tracked joints.

use serde::{Deserialize, Serialize};

use super::reference::{compute_reference, ReferenceFrame};
use super::trackers::TrackerFrame;
use super::FeatureError;
use crate::motion::{rot_to_6d, Transform};

/// Scalars per joint velocity: linear (3) + angular as 6-DoF (6).
pub const VELOCITY_DIM: usize = 9;
/// Width of one feature row: four velocities plus the reference height.
pub const FEATURE_DIM: usize = 4 * VELOCITY_DIM + 1;

/// How the reference joint's angular velocity is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AngularMode {
    /// `inv(q_{i-1}) · q_i`, invariant to global yaw.
    #[default]
    Relative,
    /// `inv(q_i) · inv(q_{i-1}) · q_i` evaluated as written.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub reference_angular: AngularMode,
    /// Multiplies the reference height column (runtime calibration).
    pub height_scale: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            reference_angular: AngularMode::Relative,
            height_scale: 1.0,
        }
    }
}

pub type FeatureVector = [f64; FEATURE_DIM];

/// `[v (3), forward (3), up (3)]` for a joint between two frames, each
/// frame's position and orientation expressed in its own reference frame.
pub fn joint_velocity(
    prev: &Transform,
    cur: &Transform,
    prev_ref: &ReferenceFrame,
    cur_ref: &ReferenceFrame,
) -> [f64; VELOCITY_DIM] {
    let local = |t: &Transform, r: &ReferenceFrame| {
        let inv = r.rotation().inverse();
        (inv * (t.position - r.position()), inv * t.rotation)
    };
    let (p_prev, q_prev) = local(prev, prev_ref);
    let (p_cur, q_cur) = local(cur, cur_ref);
    pack(&(p_cur - p_prev), &(q_prev.inverse() * q_cur))
}

pub fn reference_velocity(
    prev_ref: &ReferenceFrame,
    cur_ref: &ReferenceFrame,
    mode: AngularMode,
) -> [f64; VELOCITY_DIM] {
    let q_prev = *prev_ref.rotation();
    let q_cur = *cur_ref.rotation();
    let v = q_cur.inverse() * (cur_ref.position() - prev_ref.position());
    let w = match mode {
        AngularMode::Relative => q_prev.inverse() * q_cur,
        AngularMode::Literal => q_cur.inverse() * q_prev.inverse() * q_cur,
    };
    pack(&v, &w)
}

fn pack(v: &nalgebra::Vector3<f64>, w: &crate::motion::Rotation) -> [f64; VELOCITY_DIM] {
    let s = rot_to_6d(w).to_array();
    [v.x, v.y, v.z, s[0], s[1], s[2], s[3], s[4], s[5]]
}

/// Feature row for frame `cur` given its predecessor.
pub fn feature_vector(
    prev: &TrackerFrame,
    cur: &TrackerFrame,
    cfg: &FeatureConfig,
) -> Result<FeatureVector, FeatureError> {
    let prev_ref = compute_reference(&prev.pelvis)?;
    let cur_ref = compute_reference(&cur.pelvis)?;
    Ok(feature_vector_with_refs(prev, cur, &prev_ref, &cur_ref, cfg))
}

pub(crate) fn feature_vector_with_refs(
    prev: &TrackerFrame,
    cur: &TrackerFrame,
    prev_ref: &ReferenceFrame,
    cur_ref: &ReferenceFrame,
    cfg: &FeatureConfig,
) -> FeatureVector {
    let mut x = [0.0; FEATURE_DIM];
    x[..9].copy_from_slice(&reference_velocity(prev_ref, cur_ref, cfg.reference_angular));
    let joints = [
        (&prev.head, &cur.head),
        (&prev.left_hand, &cur.left_hand),
        (&prev.right_hand, &cur.right_hand),
    ];
    for (k, (a, b)) in joints.into_iter().enumerate() {
        let base = 9 * (k + 1);
        x[base..base + 9].copy_from_slice(&joint_velocity(a, b, prev_ref, cur_ref));
    }
    x[FEATURE_DIM - 1] = cur_ref.height() * cfg.height_scale;
    x
}

/// Feature rows for frames `1..frames.len()`; row `k` belongs to frame `k + 1`.
pub fn feature_sequence(
    frames: &[TrackerFrame],
    cfg: &FeatureConfig,
) -> Result<Vec<FeatureVector>, FeatureError> {
    let refs = frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            compute_reference(&f.pelvis).map_err(|_| FeatureError::DegenerateHeadingAt(i))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((1..frames.len())
        .map(|i| feature_vector_with_refs(&frames[i - 1], &frames[i], &refs[i - 1], &refs[i], cfg))
        .collect())
}
