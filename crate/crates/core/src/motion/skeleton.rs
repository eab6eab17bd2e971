//! Joint hierarchy, the leg rig designation, and the JSON skeleton description.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::MotionError;

/// Number of predicted lower-body joints (hip, upper leg, lower leg, foot per side).
pub const LOWER_BODY_JOINTS: usize = 8;
/// Joints per leg chain, excluding the toe-base.
pub const LEG_CHAIN_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    #[serde(with = "vec3_serde")]
    pub offset: Vector3<f64>,
}

/// Joint ids that the predictor, the tracker synthesis and the IK solver
/// rely on. Lower-body order is `[hip, upper leg, lower leg, foot]` for the
/// left side followed by the right side; each leg must form the chain
/// `root → hip → upper leg → lower leg → foot → toe-base`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LegRig {
    pub lower_body: [usize; LOWER_BODY_JOINTS],
    pub toe_base: [usize; 2],
    pub head: usize,
    pub left_hand: usize,
    pub right_hand: usize,
}

impl LegRig {
    /// Chain joints hip → foot of one side.
    pub fn leg_chain(&self, side: Side) -> [usize; LEG_CHAIN_LEN] {
        let base = side.index() * LEG_CHAIN_LEN;
        [
            self.lower_body[base],
            self.lower_body[base + 1],
            self.lower_body[base + 2],
            self.lower_body[base + 3],
        ]
    }

    pub fn toe(&self, side: Side) -> usize {
        self.toe_base[side.index()]
    }
}

/// Joint names that designate the [`LegRig`] on a skeleton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigNames {
    pub lower_body: [String; LOWER_BODY_JOINTS],
    pub toe_base: [String; 2],
    pub head: String,
    pub left_hand: String,
    pub right_hand: String,
}

impl Default for RigNames {
    /// CMU-style naming, also used by the built-in standard skeleton.
    fn default() -> Self {
        let s = |v: &str| v.to_string();
        Self {
            lower_body: [
                s("LHipJoint"),
                s("LeftUpLeg"),
                s("LeftLeg"),
                s("LeftFoot"),
                s("RHipJoint"),
                s("RightUpLeg"),
                s("RightLeg"),
                s("RightFoot"),
            ],
            toe_base: [s("LeftToeBase"), s("RightToeBase")],
            head: s("Head"),
            left_hand: s("LeftFingerBase"),
            right_hand: s("RightFingerBase"),
        }
    }
}

/// On-disk skeleton description. `joints` is optional: without it the file
/// only designates the rig of a skeleton parsed from BVH.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonDescription {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joints: Option<Vec<Joint>>,
    #[serde(default)]
    pub rig: RigNames,
}

impl SkeletonDescription {
    pub fn from_json(text: &str) -> Result<Self, MotionError> {
        serde_json::from_str(text).map_err(|e| MotionError::Description(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, MotionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MotionError::Description(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Builds the full skeleton; requires `joints`.
    pub fn to_skeleton(&self) -> Result<Skeleton, MotionError> {
        let joints = self
            .joints
            .clone()
            .ok_or_else(|| MotionError::Description("description has no joints".into()))?;
        Skeleton::new(joints)?.with_rig(&self.rig)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    joints: Vec<Joint>,
    rig: Option<LegRig>,
}

impl Skeleton {
    /// Validates topological order: joint 0 is the only root and every
    /// parent index precedes its child.
    pub fn new(joints: Vec<Joint>) -> Result<Self, MotionError> {
        if joints.is_empty() {
            return Err(MotionError::Topology("skeleton has no joints".into()));
        }
        for (i, j) in joints.iter().enumerate() {
            match (i, j.parent) {
                (0, None) => {}
                (0, Some(_)) => {
                    return Err(MotionError::Topology("joint 0 must be the root".into()))
                }
                (_, None) => {
                    return Err(MotionError::Topology(format!(
                        "joint '{}' has no parent but is not the root",
                        j.name
                    )))
                }
                (_, Some(p)) if p >= i => {
                    return Err(MotionError::Topology(format!(
                        "joint '{}' (index {i}) has parent index {p}",
                        j.name
                    )))
                }
                _ => {}
            }
            if !j.offset.iter().all(|v| v.is_finite()) {
                return Err(MotionError::NonFinite);
            }
        }
        Ok(Self { joints, rig: None })
    }

    pub fn with_rig(mut self, names: &RigNames) -> Result<Self, MotionError> {
        let find = |n: &str| {
            self.index_of(n)
                .ok_or_else(|| MotionError::MissingJoint(n.to_string()))
        };
        let mut lower_body = [0usize; LOWER_BODY_JOINTS];
        for (slot, name) in lower_body.iter_mut().zip(&names.lower_body) {
            *slot = find(name)?;
        }
        let toe_base = [find(&names.toe_base[0])?, find(&names.toe_base[1])?];
        let rig = LegRig {
            lower_body,
            toe_base,
            head: find(&names.head)?,
            left_hand: find(&names.left_hand)?,
            right_hand: find(&names.right_hand)?,
        };
        let mut ids: Vec<usize> = lower_body.iter().chain(&toe_base).copied().collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != LOWER_BODY_JOINTS + 2 {
            return Err(MotionError::Topology(
                "lower-body and toe-base joints must be distinct".into(),
            ));
        }
        for side in Side::BOTH {
            let chain = rig.leg_chain(side);
            let mut parent = 0usize;
            for &j in chain.iter().chain(std::iter::once(&rig.toe(side))) {
                if self.joints[j].parent != Some(parent) {
                    return Err(MotionError::Topology(format!(
                        "leg chain broken at '{}': expected parent '{}'",
                        self.joints[j].name, self.joints[parent].name
                    )));
                }
                parent = j;
            }
        }
        self.rig = Some(rig);
        Ok(self)
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn rig(&self) -> Result<&LegRig, MotionError> {
        self.rig.as_ref().ok_or(MotionError::NoRig)
    }

    pub fn has_rig(&self) -> bool {
        self.rig.is_some()
    }

    pub fn rig_names(&self) -> Option<RigNames> {
        let rig = self.rig?;
        let n = |i: usize| self.joints[i].name.clone();
        Some(RigNames {
            lower_body: rig.lower_body.map(n),
            toe_base: rig.toe_base.map(n),
            head: n(rig.head),
            left_hand: n(rig.left_hand),
            right_hand: n(rig.right_hand),
        })
    }

    pub fn to_description(&self) -> SkeletonDescription {
        SkeletonDescription {
            joints: Some(self.joints.clone()),
            rig: self.rig_names().unwrap_or_default(),
        }
    }

    /// Multiplies every offset by `scale`.
    pub fn scaled(&self, scale: f64) -> Skeleton {
        let mut out = self.clone();
        for j in &mut out.joints {
            j.offset *= scale;
        }
        out
    }

    /// Ids from the root down to `joint`, inclusive.
    pub fn ancestry(&self, joint: usize) -> Vec<usize> {
        let mut path = vec![joint];
        let mut cur = joint;
        while let Some(p) = self.joints[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// A CMU-topology skeleton with a 1 m root height in T-pose: with the root
    /// at y = 1 and identity rotations the toe-bases sit on the floor.
    pub fn standard() -> Skeleton {
        let mut joints: Vec<Joint> = Vec::new();
        let mut add = |name: &str, parent: Option<&str>, x: f64, y: f64, z: f64| {
            let parent = parent.map(|p| {
                joints
                    .iter()
                    .position(|j| j.name == p)
                    .expect("parent declared first")
            });
            joints.push(Joint {
                name: name.to_string(),
                parent,
                offset: Vector3::new(x, y, z),
            });
        };
        add("Hips", None, 0.0, 0.0, 0.0);
        for (side, sx) in [("L", 1.0), ("R", -1.0)] {
            let long = if side == "L" { "Left" } else { "Right" };
            add(&format!("{side}HipJoint"), Some("Hips"), 0.0, 0.0, 0.0);
            add(
                &format!("{long}UpLeg"),
                Some(&format!("{side}HipJoint")),
                0.09 * sx,
                -0.08,
                0.0,
            );
            add(&format!("{long}Leg"), Some(&format!("{long}UpLeg")), 0.0, -0.42, 0.0);
            add(&format!("{long}Foot"), Some(&format!("{long}Leg")), 0.0, -0.42, 0.0);
            add(&format!("{long}ToeBase"), Some(&format!("{long}Foot")), 0.0, -0.08, 0.12);
        }
        add("LowerBack", Some("Hips"), 0.0, 0.1, 0.0);
        add("Spine", Some("LowerBack"), 0.0, 0.15, 0.0);
        add("Spine1", Some("Spine"), 0.0, 0.15, 0.0);
        add("Neck", Some("Spine1"), 0.0, 0.12, 0.0);
        add("Head", Some("Neck"), 0.0, 0.12, 0.02);
        for (long, sx) in [("Left", 1.0), ("Right", -1.0)] {
            add(&format!("{long}Shoulder"), Some("Spine1"), 0.04 * sx, 0.1, 0.0);
            add(&format!("{long}Arm"), Some(&format!("{long}Shoulder")), 0.14 * sx, 0.0, 0.0);
            add(&format!("{long}ForeArm"), Some(&format!("{long}Arm")), 0.28 * sx, 0.0, 0.0);
            add(&format!("{long}Hand"), Some(&format!("{long}ForeArm")), 0.25 * sx, 0.0, 0.0);
            add(&format!("{long}FingerBase"), Some(&format!("{long}Hand")), 0.08 * sx, 0.0, 0.0);
        }
        Skeleton::new(joints)
            .and_then(|s| s.with_rig(&RigNames::default()))
            .expect("standard skeleton is well formed")
    }
}

pub(crate) mod vec3_serde {
    use nalgebra::Vector3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector3<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector3<f64>, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vector3::new(a[0], a[1], a[2]))
    }
}
