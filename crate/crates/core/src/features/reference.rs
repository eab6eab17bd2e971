use nalgebra::{Matrix3, Vector3};

use super::FeatureError;
use crate::motion::{Rotation, Transform};

/// Heading of the pelvis must stay at least this far from world up.
pub const MIN_HEADING_ANGLE_DEG: f64 = 1.0;

/// Egocentric frame at the root: Y is world up, Z is the pelvis heading
/// projected onto the ground plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceFrame {
    pub transform: Transform,
}

impl ReferenceFrame {
    pub fn rotation(&self) -> &Rotation {
        &self.transform.rotation
    }

    pub fn position(&self) -> &Vector3<f64> {
        &self.transform.position
    }

    pub fn height(&self) -> f64 {
        self.transform.position.y
    }
}

pub fn compute_reference(pelvis: &Transform) -> Result<ReferenceFrame, FeatureError> {
    let fwd = pelvis.rotation.forward();
    let ground = Vector3::new(fwd.x, 0.0, fwd.z);
    let horizontal = ground.norm();
    // |horizontal| = sin(angle to world up) for a unit forward
    if !(horizontal > MIN_HEADING_ANGLE_DEG.to_radians().sin()) {
        return Err(FeatureError::DegenerateHeading);
    }
    let z = ground / horizontal;
    let y = Vector3::new(0.0, 1.0, 0.0);
    let x = y.cross(&z);
    Ok(ReferenceFrame {
        transform: Transform::new(
            Rotation::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z])),
            pelvis.position,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_pelvis_gives_identity_reference() {
        let r = compute_reference(&Transform::from_position(Vector3::new(0.0, 1.0, 0.0))).unwrap();
        assert_eq!(*r.rotation(), Rotation::identity());
        assert_eq!(*r.position(), Vector3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn pitch_is_projected_away() {
        let pelvis = Transform::new(Rotation::about_x(30f64.to_radians()), Vector3::zeros());
        let r = compute_reference(&pelvis).unwrap();
        assert!((r.rotation().forward() - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
        assert_eq!(r.rotation().up(), Vector3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn yaw_carries_over() {
        let yaw = Rotation::about_y(std::f64::consts::FRAC_PI_2);
        let pelvis = Transform::new(yaw * Rotation::about_z(0.2), Vector3::zeros());
        let r = compute_reference(&pelvis).unwrap();
        assert!(r.rotation().max_deviation(&yaw) < 1e-15);
    }

    #[test]
    fn vertical_heading_is_rejected() {
        let pelvis = Transform::new(Rotation::about_x(-89.5f64.to_radians()), Vector3::zeros());
        assert!(matches!(
            compute_reference(&pelvis),
            Err(FeatureError::DegenerateHeading)
        ));
        let ok = Transform::new(Rotation::about_x(-88.0f64.to_radians()), Vector3::zeros());
        assert!(compute_reference(&ok).is_ok());
    }
}
