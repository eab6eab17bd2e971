use nalgebra::Vector3;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::ops::Mul;

use super::rotation::{rot_to_6d, sixdof_to_rot, Rotation, SixDof};
use super::MotionError;

/// Rigid transform: a rotation followed by a translation in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Transform {
    pub rotation: Rotation,
    pub position: Vector3<f64>,
}

impl Transform {
    pub fn new(rotation: Rotation, position: Vector3<f64>) -> Self {
        Self { rotation, position }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_position(position: Vector3<f64>) -> Self {
        Self {
            rotation: Rotation::identity(),
            position,
        }
    }

    pub fn inverse(&self) -> Self {
        let inv = self.rotation.inverse();
        Self {
            rotation: inv,
            position: -(inv * self.position),
        }
    }

    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * *p + self.position
    }

    /// `[px, py, pz, fx, fy, fz, ux, uy, uz]`: position then forward/up axes.
    pub fn to_array(&self) -> [f64; 9] {
        let s = rot_to_6d(&self.rotation).to_array();
        [
            self.position.x,
            self.position.y,
            self.position.z,
            s[0],
            s[1],
            s[2],
            s[3],
            s[4],
            s[5],
        ]
    }

    /// Inverse of [`Transform::to_array`]; the rotation part is orthonormalized.
    pub fn from_array(v: &[f64; 9]) -> Result<Self, MotionError> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(MotionError::NonFinite);
        }
        Ok(Self {
            position: Vector3::new(v[0], v[1], v[2]),
            rotation: sixdof_to_rot(&SixDof::from_slice(&v[3..]))?,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.rotation.matrix().iter().all(|v| v.is_finite())
    }
}

impl Mul for Transform {
    type Output = Transform;
    fn mul(self, rhs: Transform) -> Transform {
        Transform {
            rotation: self.rotation * rhs.rotation,
            position: self.position + self.rotation * rhs.position,
        }
    }
}

impl Serialize for Transform {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Transform {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = <[f64; 9]>::deserialize(d)?;
        Transform::from_array(&v).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_and_inverse() {
        let a = Transform::new(Rotation::about_y(0.7), Vector3::new(1.0, 2.0, 3.0));
        let b = Transform::new(Rotation::about_x(-0.2), Vector3::new(0.0, -1.0, 0.5));
        let p = Vector3::new(0.3, 0.1, -0.4);
        let composed = (a * b).apply_point(&p);
        assert!((composed - a.apply_point(&b.apply_point(&p))).norm() < 1e-14);
        let id = a * a.inverse();
        assert!(id.position.norm() < 1e-14);
        assert!(id.rotation.angle() < 1e-14);
    }

    #[test]
    fn array_encoding_round_trips() {
        let t = Transform::new(
            Rotation::from_axis_angle(&Vector3::new(1.0, 2.0, -0.5), 1.1),
            Vector3::new(-4.0, 0.9, 2.5),
        );
        let back = Transform::from_array(&t.to_array()).unwrap();
        assert!(back.rotation.max_deviation(&t.rotation) < 1e-15);
        assert_eq!(back.position, t.position);
    }
}
