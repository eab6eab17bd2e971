//! Loss terms evaluated directly on values (no tape).

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::motion::{decode_lower_body, MotionError, Rotation, Side, Skeleton, Transform, POSE_DIM};
use crate::net::tape::softmax_xent_row;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub pose: f64,
    pub fk: f64,
    pub velocity: f64,
    pub contact: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            pose: 1.0,
            fk: 0.1,
            velocity: 0.1,
            contact: 1e-6,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), TrainError> {
        for (name, v) in [
            ("pose", self.pose),
            ("fk", self.fk),
            ("velocity", self.velocity),
            ("contact", self.contact),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(TrainError::Config(format!("loss weight {name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub pose: f64,
    pub fk: f64,
    pub velocity: f64,
    pub contact_left: f64,
    pub contact_right: f64,
}

impl LossComponents {
    pub fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("pose", self.pose),
            ("fk", self.fk),
            ("velocity", self.velocity),
            ("contact_left", self.contact_left),
            ("contact_right", self.contact_right),
        ]
    }

    pub fn contact(&self) -> f64 {
        0.5 * (self.contact_left + self.contact_right)
    }
}

/// `λ1·pose + λ2·fk + λ3·velocity + λ4/2·(left + right)`, evaluated left to
/// right.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> Result<f64, TrainError> {
    for (name, v) in c.named() {
        if !v.is_finite() {
            return Err(TrainError::NonFiniteLoss(name));
        }
    }
    Ok(w.pose * c.pose + w.fk * c.fk + w.velocity * c.velocity + w.contact / 2.0 * (c.contact_left + c.contact_right))
}

/// Mean absolute difference over all elements.
pub fn loss_pose(pred: &[f64], target: &[f64]) -> Result<f64, TrainError> {
    if pred.len() != target.len() {
        return Err(TrainError::Shape {
            expected: target.len(),
            got: pred.len(),
        });
    }
    Ok(pred.iter().zip(target).map(|(a, b)| (a - b).abs()).sum::<f64>() / pred.len() as f64)
}

/// Toe-base world positions `[left, right]` from 48 lower-body values and a
/// root transform, walking only the two leg chains.
pub fn leg_toe_positions(
    skeleton: &Skeleton,
    root: &Transform,
    lower_body: &[f64],
) -> Result<[Vector3<f64>; 2], MotionError> {
    let rig = skeleton.rig()?;
    let rots = decode_lower_body(lower_body)?;
    let joints = skeleton.joints();
    Ok(Side::BOTH.map(|side| {
        let chain = rig.leg_chain(side);
        let mut v = joints[rig.toe(side)].offset;
        for k in (0..chain.len()).rev() {
            let r: &Rotation = &rots[side.index() * chain.len() + k];
            v = joints[chain[k]].offset + *r * v;
        }
        root.apply_point(&v)
    }))
}

fn check_pose(v: &[f64]) -> Result<(), TrainError> {
    if v.len() != POSE_DIM {
        return Err(TrainError::Shape {
            expected: POSE_DIM,
            got: v.len(),
        });
    }
    Ok(())
}

/// Mean over both feet of the toe-base distance, both poses placed at the
/// ground-truth root.
pub fn loss_fk(pred: &[f64], target: &[f64], root: &Transform, skeleton: &Skeleton) -> Result<f64, TrainError> {
    check_pose(pred)?;
    check_pose(target)?;
    let p = leg_toe_positions(skeleton, root, pred)?;
    let t = leg_toe_positions(skeleton, root, target)?;
    Ok(((p[0] - t[0]).norm() + (p[1] - t[1]).norm()) / 2.0)
}

/// `‖(FK(pred_i) − FK(Y_{i−1})) − (FK(Y_i) − FK(Y_{i−1}))‖` at the toe-bases,
/// averaged over feet, computed as written.
pub fn loss_velocity(
    pred: &[f64],
    target: &[f64],
    target_prev: &[f64],
    root: &Transform,
    root_prev: &Transform,
    skeleton: &Skeleton,
) -> Result<f64, TrainError> {
    check_pose(pred)?;
    check_pose(target)?;
    check_pose(target_prev)?;
    let p = leg_toe_positions(skeleton, root, pred)?;
    let t = leg_toe_positions(skeleton, root, target)?;
    let q = leg_toe_positions(skeleton, root_prev, target_prev)?;
    let d = |s: usize| ((p[s] - q[s]) - (t[s] - q[s])).norm();
    Ok((d(0) + d(1)) / 2.0)
}

/// Per-foot softmax cross-entropy, `[left, right]`; class 1 is contact.
pub fn loss_contact(logits: &[f64; 4], labels: [bool; 2]) -> [f64; 2] {
    [
        softmax_xent_row(&logits[..2], labels[0] as usize),
        softmax_xent_row(&logits[2..], labels[1] as usize),
    ]
}

/// Learning rate at zero-based epoch `e`: `initial · decay^e`.
pub fn learning_rate(initial: f64, decay: f64, epoch: usize) -> f64 {
    initial * decay.powi(epoch as i32)
}
