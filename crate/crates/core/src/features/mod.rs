//! Input features: tracker frames, egocentric reference frame, velocity
//! rows, windows, contact labels and the on-disk training dataset.

pub mod contacts;
pub mod dataset;
pub mod reference;
pub mod trackers;
pub mod velocity;
pub mod window;

pub use contacts::{is_contact, label_contacts, CONTACT_HEIGHT};
pub use dataset::{category_summary, manifest_path, ClipEntry, Dataset, DatasetClip, DatasetConfig, Manifest};
pub use reference::{compute_reference, ReferenceFrame, MIN_HEADING_ANGLE_DEG};
pub use trackers::{
    augment_noise, read_recording, synthesize_trackers, write_recording, NoiseConfig, TrackerFrame,
    TRACKER_COUNT, TRACKER_DIM,
};
pub use velocity::{
    feature_sequence, feature_vector, joint_velocity, reference_velocity, AngularMode,
    FeatureConfig, FeatureVector, FEATURE_DIM, VELOCITY_DIM,
};
pub use window::{build_window, window_from_features, FeatureWindow, WINDOW_LEN};

use crate::motion::MotionError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("pelvis heading is within {MIN_HEADING_ANGLE_DEG} degree of vertical")]
    DegenerateHeading,
    #[error("pelvis heading is within {MIN_HEADING_ANGLE_DEG} degree of vertical at frame {0}")]
    DegenerateHeadingAt(usize),
    #[error("expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("recording line {line}: {message}")]
    Recording { line: usize, message: String },
    #[error("frame {frame} needs {needed} frames of history")]
    InsufficientHistory { frame: usize, needed: usize },
    #[error("dataset has no clips")]
    EmptyDataset,
    #[error("clip {name} has {frames} frames, at least {needed} required")]
    ClipTooShort {
        name: String,
        frames: usize,
        needed: usize,
    },
    #[error("clip {0} uses a different skeleton")]
    SkeletonMismatch(String),
    #[error("dataset payload: {0}")]
    Payload(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Motion(#[from] MotionError),
}
