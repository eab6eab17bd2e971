//! Contact decisions, contact locking with leg IK and release blending.

pub mod contact;
pub mod ik;

pub use contact::{ContactDecider, FootState, PostProcessor, StepReport};
pub use ik::{jacobian_ik, IkResult};

use serde::{Deserialize, Serialize};

use crate::motion::MotionError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PostprocessError {
    #[error("invalid IK chain: {0}")]
    Chain(String),
    #[error("invalid post-processing config: {0}")]
    Config(String),
    #[error("IK target is not finite")]
    NonFiniteTarget,
    #[error(transparent)]
    Motion(#[from] MotionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IkConfig {
    pub max_iterations: usize,
    /// Metres.
    pub tolerance: f64,
    /// `λ` in `Jᵀ(JJᵀ + λ²I)⁻¹`.
    pub damping: f64,
    /// Frames over which a released foot returns to the network pose.
    pub blend_frames: usize,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-3,
            damping: 0.1,
            blend_frames: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostprocessConfig {
    pub enabled: bool,
    pub ik: IkConfig,
    /// Contact probability above which a foot counts as planted.
    pub threshold: f64,
    /// Half-width of the hysteresis band around `threshold`; 0 disables it.
    pub hysteresis: f64,
    /// Put lock targets on the floor instead of at the captured height.
    pub snap_to_floor: bool,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            ik: IkConfig::default(),
            threshold: 0.5,
            hysteresis: 0.0,
            snap_to_floor: false,
        }
    }
}

impl PostprocessConfig {
    pub fn validate(&self) -> Result<(), PostprocessError> {
        let ik = &self.ik;
        if ik.max_iterations == 0 || ik.blend_frames == 0 || !(ik.tolerance > 0.0) || !(ik.damping > 0.0) {
            return Err(PostprocessError::Config(
                "IK iterations, tolerance, damping and blend frames must be positive".into(),
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(PostprocessError::Config(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        if !(self.hysteresis >= 0.0 && self.threshold - self.hysteresis >= 0.0 && self.threshold + self.hysteresis <= 1.0) {
            return Err(PostprocessError::Config(format!("hysteresis {} leaves [0, 1]", self.hysteresis)));
        }
        Ok(())
    }
}

pub fn contact_probability(no: f64, yes: f64) -> f64 {
    // two-class softmax, p(yes) = σ(yes − no)
    1.0 / (1.0 + (no - yes).exp())
}

/// Per-foot contact decisions `[left, right]` from the four contact logits;
/// a foot is planted when its contact probability is strictly above
/// `threshold`.
pub fn decide_contact(logits: &[f64; 4], threshold: f64) -> [bool; 2] {
    [
        contact_probability(logits[0], logits[1]) > threshold,
        contact_probability(logits[2], logits[3]) > threshold,
    ]
}

/// Slow-in-slow-out weight `(1 − cos πs) / 2`, `s` clamped to `[0, 1]`.
pub fn blend_alpha(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    (1.0 - (std::f64::consts::PI * s).cos()) / 2.0
}
