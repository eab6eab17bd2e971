//! Accuracy metrics and the evaluation report.

pub mod metrics;
pub mod report;

pub use metrics::{body_movement, contact_accuracy, positional_error, rotational_error, toe_distance_error};
pub use report::{evaluate, sha256_hex, write_frame_csv, write_report, CategoryMetrics, EvalConfig, FrameRecord, MetricsReport};

use crate::features::FeatureError;
use crate::motion::MotionError;
use crate::net::NetError;
use crate::postprocess::PostprocessError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("streams differ in length: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("body movement needs at least 2 frames, got {0}")]
    TooShort(usize),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Postprocess(#[from] PostprocessError),
}
