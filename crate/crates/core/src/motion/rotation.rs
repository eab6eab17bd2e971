//! Rotations and the forward/up 6-DoF encoding.
//!
//! A [`Rotation`] wraps an orthonormal, right-handed 3×3 matrix. The world is
//! Y-up with +Z as the character's frontal direction, so the columns of a
//! rotation are its local X (right), Y (up) and Z (forward) axes.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use std::ops::Mul;

use super::MotionError;

/// Tolerance used when validating externally supplied matrices.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

/// Inputs with a norm at or below this value are rejected by [`sixdof_to_rot`].
pub const DEGENERATE_NORM: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps a matrix without checking it. Callers must guarantee the
    /// orthonormality and determinant invariants.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn try_from_matrix(m: Matrix3<f64>) -> Result<Self, MotionError> {
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if !m.iter().all(|v| v.is_finite())
            || err > ORTHONORMAL_TOLERANCE
            || (det - 1.0).abs() > ORTHONORMAL_TOLERANCE
        {
            return Err(MotionError::InvalidRotation);
        }
        Ok(Self(m))
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        let k = axis / n;
        let (s, c) = angle.sin_cos();
        let skew = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
        Self(Matrix3::identity() + skew * s + skew * skew * (1.0 - c))
    }

    /// Exponential map of a rotation vector (axis × angle).
    pub fn from_scaled_axis(v: &Vector3<f64>) -> Self {
        Self::from_axis_angle(v, v.norm())
    }

    pub fn about_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn about_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn right(&self) -> Vector3<f64> {
        self.0.column(0).into()
    }

    pub fn up(&self) -> Vector3<f64> {
        self.0.column(1).into()
    }

    pub fn forward(&self) -> Vector3<f64> {
        self.0.column(2).into()
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Rotation vector (axis × angle) of this rotation, angle in [0, π].
    pub fn scaled_axis(&self) -> Vector3<f64> {
        self.quaternion().scaled_axis()
    }

    /// Geodesic angle in radians, robust near 0 and π.
    pub fn angle(&self) -> f64 {
        let m = &self.0;
        let sin = 0.5
            * Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
                .norm();
        let cos = 0.5 * (m.trace() - 1.0);
        sin.atan2(cos)
    }

    /// Geodesic distance between two rotations in radians.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        (self.inverse() * *other).angle()
    }

    pub(crate) fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_matrix(&self.0)
    }

    pub(crate) fn from_quaternion(q: &UnitQuaternion<f64>) -> Self {
        Self(q.to_rotation_matrix().into_inner())
    }

    /// Shortest-arc spherical interpolation; `t = 0` returns `self` and
    /// `t = 1` returns `other` exactly.
    pub fn slerp(&self, other: &Rotation, t: f64) -> Rotation {
        if t == 0.0 {
            return *self;
        }
        if t == 1.0 {
            return *other;
        }
        let a = self.quaternion().into_inner();
        let mut b = other.quaternion().into_inner();
        let mut dot = a.coords.dot(&b.coords);
        if dot < 0.0 {
            b = -b;
            dot = -dot;
        }
        let q = if dot > 1.0 - 1e-12 {
            a.lerp(&b, t)
        } else {
            let theta = dot.clamp(-1.0, 1.0).acos();
            let s = theta.sin();
            a * (((1.0 - t) * theta).sin() / s) + b * ((t * theta).sin() / s)
        };
        Self::from_quaternion(&UnitQuaternion::from_quaternion(q))
    }

    /// Largest absolute entry-wise difference between two matrices.
    pub fn max_deviation(&self, other: &Rotation) -> f64 {
        (self.0 - other.0).abs().max()
    }

    /// Re-orthonormalizes a rotation that has accumulated round-off.
    pub fn renormalized(&self) -> Rotation {
        sixdof_to_rot(&rot_to_6d(self)).unwrap_or(*self)
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for Rotation {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// Forward (Z) and up (Y) axes of a rotation, stored as `[forward, up]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SixDof {
    pub forward: Vector3<f64>,
    pub up: Vector3<f64>,
}

impl SixDof {
    pub const IDENTITY: [f64; 6] = [0.0, 0.0, 1.0, 0.0, 1.0, 0.0];

    pub fn new(forward: Vector3<f64>, up: Vector3<f64>) -> Self {
        Self { forward, up }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        assert!(v.len() >= 6, "6-DoF slice needs 6 values, got {}", v.len());
        Self {
            forward: Vector3::new(v[0], v[1], v[2]),
            up: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.forward.x,
            self.forward.y,
            self.forward.z,
            self.up.x,
            self.up.y,
            self.up.z,
        ]
    }
}

pub fn rot_to_6d(r: &Rotation) -> SixDof {
    SixDof {
        forward: r.forward(),
        up: r.up(),
    }
}

/// Gram–Schmidt decoding: forward is normalized first, then up is made
/// orthogonal to it; right = up × forward.
pub fn sixdof_to_rot(v: &SixDof) -> Result<Rotation, MotionError> {
    let fnorm = v.forward.norm();
    if !(fnorm > DEGENERATE_NORM) {
        return Err(MotionError::DegenerateSixDof);
    }
    let forward = v.forward / fnorm;
    let up = v.up - forward * v.up.dot(&forward);
    let unorm = up.norm();
    if !(unorm > DEGENERATE_NORM) {
        return Err(MotionError::DegenerateSixDof);
    }
    let up = up / unorm;
    let right = up.cross(&forward);
    Ok(Rotation(Matrix3::from_columns(&[right, up, forward])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_encodes_to_z_forward_y_up() {
        let s = rot_to_6d(&Rotation::identity());
        assert_eq!(s.to_array(), SixDof::IDENTITY);
    }

    #[test]
    fn yaw_ninety_points_forward_along_x() {
        let s = rot_to_6d(&Rotation::about_y(FRAC_PI_2));
        assert!((s.forward - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        assert!((s.up - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn exact_axes_decode_to_identity() {
        let r = sixdof_to_rot(&SixDof::from_slice(&SixDof::IDENTITY)).unwrap();
        assert_eq!(r, Rotation::identity());
    }

    #[test]
    fn non_orthonormal_input_is_repaired() {
        let r = sixdof_to_rot(&SixDof::new(
            Vector3::new(0.0, 0.0, 2.0),
            Vector3::new(0.1, 1.0, 0.0),
        ))
        .unwrap();
        let m = r.matrix();
        assert!((m.transpose() * m - Matrix3::identity()).abs().max() < 1e-12);
        assert!((m.determinant() - 1.0).abs() < 1e-12);
        assert!((r.forward() - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn parallel_or_zero_axes_are_rejected() {
        let z = Vector3::new(0.0, 0.0, 1.0);
        assert!(matches!(
            sixdof_to_rot(&SixDof::new(z, z)),
            Err(MotionError::DegenerateSixDof)
        ));
        assert!(sixdof_to_rot(&SixDof::new(Vector3::zeros(), z)).is_err());
        assert!(sixdof_to_rot(&SixDof::new(z, Vector3::new(f64::NAN, 1.0, 0.0))).is_err());
    }

    #[test]
    fn angle_matches_axis_angle_construction() {
        for &a in &[0.0, 1e-7, 0.3, 1.5, 3.0, std::f64::consts::PI - 1e-9] {
            let r = Rotation::from_axis_angle(&Vector3::new(0.3, -0.4, 0.8), a);
            assert!((r.angle() - a).abs() < 1e-12, "{a}");
        }
    }

    #[test]
    fn slerp_takes_short_arc_and_hits_endpoints() {
        let a = Rotation::about_y(0.1);
        let b = Rotation::about_y(-0.3);
        assert_eq!(a.slerp(&b, 0.0), a);
        assert_eq!(a.slerp(&b, 1.0), b);
        let mid = a.slerp(&b, 0.5);
        assert!(mid.max_deviation(&Rotation::about_y(-0.1)) < 1e-12);
    }

    #[test]
    fn try_from_matrix_rejects_reflection() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = -1.0;
        assert!(Rotation::try_from_matrix(m).is_err());
        assert!(Rotation::try_from_matrix(*Rotation::about_z(0.4).matrix()).is_ok());
    }
}
