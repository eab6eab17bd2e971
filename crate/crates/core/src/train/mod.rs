//! Loss terms, the optimizer, batch sampling and the training loop.

pub mod adam;
pub mod check;
pub mod losses;
pub mod objective;
pub mod sampler;
pub mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use check::{check_training_gradients, GradCheckConfig};
pub use losses::{
    leg_toe_positions, learning_rate, loss_contact, loss_fk, loss_pose, loss_velocity, total_loss,
    LossComponents, LossWeights,
};
pub use objective::{BatchObjective, LossVars, TrainingSample};
pub use sampler::{ClipSampler, TrainingSet};
pub use trainer::{train, EpochRecord, TrainConfig, TrainOutcome, Trainer, CURVE_HEADER, MIN_FEATURE_SPREAD};

use crate::features::FeatureError;
use crate::motion::MotionError;
use crate::net::NetError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("loss component {0} is not finite")]
    NonFiniteLoss(&'static str),
    #[error("expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("optimizer state for tensor {index} has shape {got:?}, expected {expected:?}")]
    StateShape {
        index: usize,
        expected: [usize; 2],
        got: [usize; 2],
    },
    #[error("non-finite {component} at epoch {epoch}, batch {batch}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        component: String,
    },
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Net(#[from] NetError),
}
