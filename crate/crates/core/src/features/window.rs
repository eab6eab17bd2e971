use super::trackers::synthesize_trackers;
use super::velocity::{feature_sequence, FeatureConfig, FeatureVector, FEATURE_DIM};
use super::FeatureError;
use crate::motion::MotionClip;

/// Frames per network input window (one second at 45 fps).
pub const WINDOW_LEN: usize = 45;

/// Consecutive feature rows, oldest first, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    rows: usize,
    data: Vec<f64>,
}

impl FeatureWindow {
    pub fn from_rows(rows: &[FeatureVector]) -> Self {
        Self {
            rows: rows.len(),
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn zeros(rows: usize) -> Self {
        Self {
            rows,
            data: vec![0.0; rows * FEATURE_DIM],
        }
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * FEATURE_DIM..(t + 1) * FEATURE_DIM]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * FEATURE_DIM..(t + 1) * FEATURE_DIM]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Window of `len` rows ending at frame `i`, taken from a feature sequence
/// produced by [`feature_sequence`] (row `k` ↔ frame `k + 1`).
pub fn window_from_features(
    features: &[FeatureVector],
    i: usize,
    len: usize,
) -> Result<FeatureWindow, FeatureError> {
    if i < len || i > features.len() {
        return Err(FeatureError::InsufficientHistory { frame: i, needed: len });
    }
    Ok(FeatureWindow::from_rows(&features[i - len..i]))
}

/// The 45-row input window for frame `i` of a clip; frames `i-45..=i` are used.
pub fn build_window(
    clip: &MotionClip,
    i: usize,
    cfg: &FeatureConfig,
) -> Result<FeatureWindow, FeatureError> {
    if i < WINDOW_LEN || i >= clip.len() {
        return Err(FeatureError::InsufficientHistory {
            frame: i,
            needed: WINDOW_LEN,
        });
    }
    let sub = MotionClip {
        frames: clip.frames[i - WINDOW_LEN..=i].to_vec(),
        ..clip.clone()
    };
    let trackers = synthesize_trackers(&sub)?;
    let features = feature_sequence(&trackers, cfg)?;
    Ok(FeatureWindow::from_rows(&features))
}
