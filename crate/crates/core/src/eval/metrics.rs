//! Per-frame and per-stream error metrics.

use nalgebra::Vector3;

use super::EvalError;
use crate::motion::{Rotation, LOWER_BODY_JOINTS};

/// Fraction of matching per-foot labels over all `2N` comparisons.
pub fn contact_accuracy(pred: &[[bool; 2]], gt: &[[bool; 2]]) -> Result<f64, EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::Length {
            expected: gt.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Ok(1.0);
    }
    let hits: usize = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (p[0] == g[0]) as usize + (p[1] == g[1]) as usize)
        .sum();
    Ok(hits as f64 / (2 * pred.len()) as f64)
}

/// Mean geodesic angle over the lower-body joints, degrees.
pub fn rotational_error(pred: &[Rotation; LOWER_BODY_JOINTS], gt: &[Rotation; LOWER_BODY_JOINTS]) -> f64 {
    pred.iter().zip(gt).map(|(a, b)| a.angle_to(b).to_degrees()).sum::<f64>() / LOWER_BODY_JOINTS as f64
}

/// Mean distance between predicted and ground-truth toe-bases, cm.
pub fn positional_error(pred: &[Vector3<f64>; 2], gt: &[Vector3<f64>; 2]) -> f64 {
    100.0 * ((pred[0] - gt[0]).norm() + (pred[1] - gt[1]).norm()) / 2.0
}

/// `| ‖L − R‖_pred − ‖L − R‖_gt |` for one frame, cm.
pub fn toe_distance_error(pred: &[Vector3<f64>; 2], gt: &[Vector3<f64>; 2]) -> f64 {
    100.0 * ((pred[0] - pred[1]).norm() - (gt[0] - gt[1]).norm()).abs()
}

/// Mean over frame transitions of the summed joint-angle change, degrees
/// per frame.
pub fn body_movement(stream: &[[Rotation; LOWER_BODY_JOINTS]]) -> Result<f64, EvalError> {
    if stream.len() < 2 {
        return Err(EvalError::TooShort(stream.len()));
    }
    let total: f64 = stream
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| a.angle_to(b).to_degrees()).sum::<f64>())
        .sum();
    Ok(total / (stream.len() - 1) as f64)
}
