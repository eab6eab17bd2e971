use nalgebra::Vector3;

use super::rotation::{rot_to_6d, sixdof_to_rot, Rotation, SixDof};
use super::skeleton::{LegRig, Skeleton, LOWER_BODY_JOINTS};
use super::transform::Transform;
use super::MotionError;

/// Width of the lower-body pose vector: 8 joints × 6-DoF.
pub const POSE_DIM: usize = LOWER_BODY_JOINTS * 6;

/// Root transform plus one local rotation per non-root joint
/// (`rotations[j - 1]` belongs to joint `j`).
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub root: Transform,
    pub rotations: Vec<Rotation>,
}

impl Pose {
    pub fn identity(skeleton: &Skeleton) -> Self {
        Self {
            root: Transform::identity(),
            rotations: vec![Rotation::identity(); skeleton.len() - 1],
        }
    }

    /// Local rotation of joint `j`; the root's is its world orientation.
    pub fn local_rotation(&self, j: usize) -> Rotation {
        if j == 0 {
            self.root.rotation
        } else {
            self.rotations[j - 1]
        }
    }

    pub fn set_local_rotation(&mut self, j: usize, r: Rotation) {
        if j == 0 {
            self.root.rotation = r;
        } else {
            self.rotations[j - 1] = r;
        }
    }

    pub fn matches(&self, skeleton: &Skeleton) -> bool {
        self.rotations.len() + 1 == skeleton.len()
    }

    /// Lower-body rotations in rig order, 6-DoF encoded.
    pub fn lower_body_6d(&self, rig: &LegRig) -> [f64; POSE_DIM] {
        let mut out = [0.0; POSE_DIM];
        for (k, &j) in rig.lower_body.iter().enumerate() {
            out[k * 6..k * 6 + 6].copy_from_slice(&rot_to_6d(&self.local_rotation(j)).to_array());
        }
        out
    }

    /// Overwrites the lower-body rotations from a (possibly
    /// non-orthonormal) 48-vector.
    pub fn set_lower_body_6d(&mut self, rig: &LegRig, v: &[f64]) -> Result<(), MotionError> {
        let rots = decode_lower_body(v)?;
        for (k, &j) in rig.lower_body.iter().enumerate() {
            self.set_local_rotation(j, rots[k]);
        }
        Ok(())
    }
}

pub fn decode_lower_body(v: &[f64]) -> Result<[Rotation; LOWER_BODY_JOINTS], MotionError> {
    if v.len() != POSE_DIM {
        return Err(MotionError::Shape {
            expected: POSE_DIM,
            got: v.len(),
        });
    }
    let mut out = [Rotation::identity(); LOWER_BODY_JOINTS];
    for (k, r) in out.iter_mut().enumerate() {
        *r = sixdof_to_rot(&SixDof::from_slice(&v[k * 6..k * 6 + 6]))?;
    }
    Ok(out)
}

/// World transform of every joint: `world(j) = world(parent) · (rot_j, offset_j)`.
pub fn fk(skeleton: &Skeleton, pose: &Pose) -> Vec<Transform> {
    debug_assert!(pose.matches(skeleton));
    let joints = skeleton.joints();
    let mut world: Vec<Transform> = Vec::with_capacity(joints.len());
    world.push(pose.root);
    for (j, joint) in joints.iter().enumerate().skip(1) {
        let parent = world[joint.parent.expect("non-root has parent")];
        world.push(parent * Transform::new(pose.rotations[j - 1], joint.offset));
    }
    world
}

/// World position of the two toe-bases, `[left, right]`.
pub fn toe_positions(skeleton: &Skeleton, pose: &Pose) -> Result<[Vector3<f64>; 2], MotionError> {
    let rig = skeleton.rig()?;
    let world = fk(skeleton, pose);
    Ok([world[rig.toe_base[0]].position, world[rig.toe_base[1]].position])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::skeleton::Side;

    #[test]
    fn identity_pose_positions_are_offset_sums() {
        let s = Skeleton::standard();
        let world = fk(&s, &Pose::identity(&s));
        for (j, joint) in s.joints().iter().enumerate() {
            let sum: Vector3<f64> = s.ancestry(j).iter().map(|&a| s.joints()[a].offset).sum();
            assert!((world[j].position - sum).norm() < 1e-15, "{}", joint.name);
        }
    }

    #[test]
    fn standard_tpose_toes_touch_floor() {
        let s = Skeleton::standard();
        let mut pose = Pose::identity(&s);
        pose.root.position = Vector3::new(0.0, 1.0, 0.0);
        let toes = toe_positions(&s, &pose).unwrap();
        assert!(toes[0].y.abs() < 1e-12 && toes[1].y.abs() < 1e-12);
    }

    #[test]
    fn bent_knee_matches_hand_product() {
        let s = Skeleton::standard();
        let rig = *s.rig().unwrap();
        let [_, _, knee, foot] = rig.leg_chain(Side::Left);
        let mut pose = Pose::identity(&s);
        pose.set_local_rotation(knee, Rotation::about_x(std::f64::consts::FRAC_PI_2));
        let world = fk(&s, &pose);
        // knee world position is the plain offset sum; shin is rotated by Rx(90°)
        let knee_pos = Vector3::new(0.09, -0.08 - 0.42, 0.0);
        let rx = nalgebra::Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        let expected = knee_pos + rx * Vector3::new(0.0, -0.42, 0.0);
        assert!((world[foot].position - expected).norm() < 1e-12);
        assert!((expected - Vector3::new(0.09, -0.5, -0.42)).norm() < 1e-12);
    }

    #[test]
    fn lower_body_6d_round_trip() {
        let s = Skeleton::standard();
        let rig = *s.rig().unwrap();
        let mut pose = Pose::identity(&s);
        for (k, &j) in rig.lower_body.iter().enumerate() {
            pose.set_local_rotation(j, Rotation::about_z(0.1 * k as f64));
        }
        let v = pose.lower_body_6d(&rig);
        let mut other = Pose::identity(&s);
        other.set_lower_body_6d(&rig, &v).unwrap();
        for &j in &rig.lower_body {
            assert!(other.local_rotation(j).max_deviation(&pose.local_rotation(j)) < 1e-15);
        }
        assert!(matches!(
            decode_lower_body(&v[..47]),
            Err(MotionError::Shape { .. })
        ));
    }
}
