//! Skeleton and pose data model, 6-DoF rotations, BVH ingestion,
//! retargeting, resampling and forward kinematics.

pub mod bvh;
pub mod clip;
pub mod pose;
pub mod rotation;
pub mod skeleton;
pub mod transform;

pub use bvh::{bvh_info, parse_bvh, write_bvh, BvhInfo, BvhOptions};
pub use clip::{resample, retarget_scale, transfer_to, Category, MotionClip, TARGET_FPS};
pub use pose::{decode_lower_body, fk, toe_positions, Pose, POSE_DIM};
pub use rotation::{rot_to_6d, sixdof_to_rot, Rotation, SixDof};
pub use skeleton::{
    Joint, LegRig, RigNames, Side, Skeleton, SkeletonDescription, LEG_CHAIN_LEN,
    LOWER_BODY_JOINTS,
};
pub use transform::Transform;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("BVH parse error at line {line}: {message}")]
    Bvh { line: usize, message: String },
    #[error("BVH frame {frame} (line {line}) has {got} values, expected {expected}")]
    ChannelCount {
        frame: usize,
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("degenerate 6-DoF input: forward/up vectors are zero or parallel")]
    DegenerateSixDof,
    #[error("matrix is not a proper rotation")]
    InvalidRotation,
    #[error("non-finite value")]
    NonFinite,
    #[error("invalid skeleton: {0}")]
    Topology(String),
    #[error("skeleton has no joint named '{0}'")]
    MissingJoint(String),
    #[error("skeleton has no lower-body rig designation")]
    NoRig,
    #[error("skeleton description: {0}")]
    Description(String),
    #[error("frame {0} does not match the skeleton")]
    PoseMismatch(usize),
    #[error("frame rate must be positive, got {0}")]
    InvalidFps(f64),
    #[error("scale must be positive, got {0}")]
    InvalidScale(f64),
    #[error("cannot upsample from {from} fps to {to} fps")]
    Upsample { from: f64, to: f64 },
    #[error("expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
}
