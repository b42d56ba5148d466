//! Rigid-body algebra: unit quaternions, rotation matrices, transforms, twists
//! and wrenches.
//!
//! Quaternions are scalar-first `(w, x, y, z)` with the Hamilton product
//! everywhere in the crate. Every constructor and product renormalizes so the
//! unit-norm invariant holds to machine precision.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

/// Plain 3-vector used for positions, velocities, forces and torques.
pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> Vec3 {
        match self {
            Axis::X => Vec3::x(),
            Axis::Y => Vec3::y(),
            Axis::Z => Vec3::z(),
        }
    }
}

/// Unit quaternion, scalar first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl From<[f64; 4]> for UnitQuaternion {
    fn from(c: [f64; 4]) -> Self {
        Self::new(c[0], c[1], c[2], c[3])
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        [q.w, q.x, q.y, q.z]
    }
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::identity()
    }
}

impl UnitQuaternion {
    /// Builds a quaternion from raw components and normalizes it. A zero input
    /// yields the identity.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Self::identity();
        }
        Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }

    pub fn from_vector4(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub const fn identity() -> Self {
        Self {
            w: 1.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn coords(&self) -> Vector4<f64> {
        Vector4::new(self.w, self.x, self.y, self.z)
    }

    pub fn vector_part(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn from_axis_angle(aa: &AxisAngle) -> Self {
        let half = 0.5 * aa.angle;
        let s = half.sin();
        Self::new(half.cos(), aa.axis.x * s, aa.axis.y * s, aa.axis.z * s)
    }

    /// Exponential map of a rotation vector (axis scaled by angle).
    pub fn from_rotation_vector(v: &Vec3) -> Self {
        Self::from_axis_angle(&AxisAngle::from_rotation_vector(v))
    }

    pub fn about(axis: Axis, angle: f64) -> Self {
        Self::from_axis_angle(&AxisAngle::new(axis.unit(), angle))
    }

    /// Hamilton product `self ⊗ rhs`.
    pub fn multiply(&self, rhs: &Self) -> Self {
        let (a1, b1, c1, d1) = (self.w, self.x, self.y, self.z);
        let (a2, b2, c2, d2) = (rhs.w, rhs.x, rhs.y, rhs.z);
        Self::new(
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        )
    }

    pub fn conjugate(&self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn negated(&self) -> Self {
        Self {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Rotation angle between two orientations in `[0, π]`, insensitive to the
    /// sign of either quaternion.
    pub fn angle_to(&self, other: &Self) -> f64 {
        let rel = self.conjugate().multiply(other);
        2.0 * rel.vector_part().norm().atan2(rel.w.abs())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        let u = self.vector_part();
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(&t)
    }

    pub fn to_rotation(&self) -> Rotation3 {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Rotation3(Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ))
    }

    /// Shepperd's method: picks the numerically largest of `w, x, y, z` to
    /// divide by.
    pub fn from_rotation(r: &Rotation3) -> Self {
        let m = &r.0;
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let diag = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
        if trace >= diag[0] && trace >= diag[1] && trace >= diag[2] {
            let s = 2.0 * (1.0 + trace).sqrt();
            Self::new(
                0.25 * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        } else if diag[0] >= diag[1] && diag[0] >= diag[2] {
            let s = 2.0 * (1.0 + diag[0] - diag[1] - diag[2]).sqrt();
            Self::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            )
        } else if diag[1] >= diag[2] {
            let s = 2.0 * (1.0 + diag[1] - diag[0] - diag[2]).sqrt();
            Self::new(
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            )
        } else {
            let s = 2.0 * (1.0 + diag[2] - diag[0] - diag[1]).sqrt();
            Self::new(
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            )
        }
    }

    /// Logarithm as axis-angle with angle in `[0, π]`.
    pub fn to_axis_angle(&self) -> AxisAngle {
        let q = if self.w < 0.0 { self.negated() } else { *self };
        let v = q.vector_part();
        let s = v.norm();
        if s == 0.0 {
            return AxisAngle::zero();
        }
        AxisAngle {
            axis: v / s,
            angle: 2.0 * s.atan2(q.w),
        }
    }

    pub fn to_rotation_vector(&self) -> Vec3 {
        self.to_axis_angle().to_rotation_vector()
    }

    /// Spherical linear interpolation along the shorter arc.
    pub fn slerp(&self, other: &Self, t: f64) -> Self {
        let mut target = *other;
        if self.dot(other) < 0.0 {
            target = target.negated();
        }
        let rel = self.conjugate().multiply(&target).to_rotation_vector();
        self.multiply(&Self::from_rotation_vector(&(rel * t)))
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;
    fn mul(self, rhs: Self) -> Self {
        self.multiply(&rhs)
    }
}

/// Axis-angle pair. The axis is a unit vector whenever `angle != 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle {
    pub axis: Vec3,
    pub angle: f64,
}

impl AxisAngle {
    /// Normalizes the axis and folds the angle into `[0, π]`.
    pub fn new(axis: Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::zero();
        }
        let mut axis = axis / n;
        let mut angle = angle.rem_euclid(2.0 * PI);
        if angle > PI {
            angle = 2.0 * PI - angle;
            axis = -axis;
        }
        Self { axis, angle }
    }

    pub fn zero() -> Self {
        Self {
            axis: Vec3::z(),
            angle: 0.0,
        }
    }

    pub fn from_rotation_vector(v: &Vec3) -> Self {
        let angle = v.norm();
        if angle == 0.0 || !angle.is_finite() {
            return Self::zero();
        }
        Self::new(v / angle, angle)
    }

    pub fn to_rotation_vector(&self) -> Vec3 {
        self.axis * self.angle
    }
}

/// Result of a matrix logarithm. `degenerate` marks half-turn rotations whose
/// axis sign is not determined by the matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationLog {
    pub axis_angle: AxisAngle,
    pub degenerate: bool,
}

/// Orthonormal 3×3 matrix with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct Rotation3(Matrix3<f64>);

impl From<[[f64; 3]; 3]> for Rotation3 {
    fn from(rows: [[f64; 3]; 3]) -> Self {
        Self::from_matrix(&Matrix3::from_fn(|i, j| rows[i][j]))
    }
}

impl From<Rotation3> for [[f64; 3]; 3] {
    fn from(r: Rotation3) -> Self {
        let m = r.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }
}

impl Default for Rotation3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation3 {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Projects an arbitrary matrix onto SO(3) via the nearest unit quaternion.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        UnitQuaternion::from_rotation(&Self(*m)).to_rotation()
    }

    /// Wraps a matrix that is already known to be orthonormal.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Rotation by `angle` about one of the coordinate axes.
    pub fn elementary(axis: Axis, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(match axis {
            Axis::X => Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
            Axis::Y => Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
            Axis::Z => Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
        })
    }

    /// Rodrigues' formula.
    pub fn from_axis_angle(aa: &AxisAngle) -> Self {
        if aa.angle == 0.0 {
            return Self::identity();
        }
        let k = aa.axis.cross_matrix();
        let (s, c) = aa.angle.sin_cos();
        Self(Matrix3::identity() + k * s + k * k * (1.0 - c))
    }

    pub fn from_rotation_vector(v: &Vec3) -> Self {
        Self::from_axis_angle(&AxisAngle::from_rotation_vector(v))
    }

    /// Matrix logarithm. Goes through Shepperd's quaternion extraction, which
    /// at a half turn takes the axis from the largest diagonal entry; such
    /// results are flagged since the axis sign is then arbitrary.
    pub fn log(&self) -> RotationLog {
        let axis_angle = self.to_quaternion().to_axis_angle();
        RotationLog {
            degenerate: PI - axis_angle.angle < 1e-9,
            axis_angle,
        }
    }

    pub fn axis_angle(&self) -> AxisAngle {
        self.log().axis_angle
    }

    pub fn angle(&self) -> f64 {
        self.axis_angle().angle
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn to_quaternion(&self) -> UnitQuaternion {
        UnitQuaternion::from_rotation(self)
    }

    pub fn column(&self, i: usize) -> Vec3 {
        self.0.column(i).into_owned()
    }
}

impl Mul for Rotation3 {
    type Output = Rotation3;
    fn mul(self, rhs: Self) -> Self {
        Rotation3(self.0 * rhs.0)
    }
}

impl Mul<&Rotation3> for &Rotation3 {
    type Output = Rotation3;
    fn mul(self, rhs: &Rotation3) -> Rotation3 {
        Rotation3(self.0 * rhs.0)
    }
}

/// Homogeneous transform split into rotation and translation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Transform {
    pub rotation: Rotation3,
    pub translation: Vec3,
}

impl Transform {
    pub fn new(rotation: Rotation3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    /// `self ∘ other`: maps points of `other`'s child frame into `self`'s parent.
    pub fn compose(&self, other: &Transform) -> Transform {
        Transform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Transform {
        let rt = self.rotation.transpose();
        Transform {
            rotation: rt,
            translation: -rt.rotate(&self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn to_pose(&self) -> Pose {
        Pose {
            position: self.translation,
            orientation: self.rotation.to_quaternion(),
        }
    }
}

/// Position plus orientation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuaternion,
}

impl Pose {
    pub fn new(position: Vec3, orientation: UnitQuaternion) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn to_transform(&self) -> Transform {
        Transform {
            rotation: self.orientation.to_rotation(),
            translation: self.position,
        }
    }

    pub fn rotation(&self) -> Rotation3 {
        self.orientation.to_rotation()
    }
}

/// Linear (m/s) and angular (rad/s) velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub linear: Vec3,
    pub angular: Vec3,
}

impl Twist {
    pub fn new(linear: Vec3, angular: Vec3) -> Self {
        Self { linear, angular }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|c| c.is_finite())
    }
}

/// Force (N) and torque (N·m).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

impl Wrench {
    pub fn new(force: Vec3, torque: Vec3) -> Self {
        Self { force, torque }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_force(force: Vec3) -> Self {
        Self {
            force,
            torque: Vec3::zeros(),
        }
    }

    /// Re-expresses the wrench in a frame rotated by `r` (both parts rotated).
    pub fn rotated(&self, r: &Rotation3) -> Wrench {
        Wrench {
            force: r.rotate(&self.force),
            torque: r.rotate(&self.torque),
        }
    }
}

/// Applies `I₂ ⊗ R` to a twist: both halves are rotated by the same matrix.
pub fn rotate_twist(r: &Rotation3, v: &Twist) -> Twist {
    Twist {
        linear: r.rotate(&v.linear),
        angular: r.rotate(&v.angular),
    }
}

/// Decomposition `q = swing ⊗ twist_z(twist_angle)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingTwist {
    pub swing: UnitQuaternion,
    pub twist_angle: f64,
    /// The rotation is a pure half turn about an axis orthogonal to z, so the
    /// twist component is undefined; `twist_angle` is then reported as 0.
    pub degenerate: bool,
}

/// Splits `q` into a rotation about the z axis (applied first, in the body
/// frame) and a residual swing whose axis is orthogonal to z.
pub fn swing_twist_about_z(q: &UnitQuaternion) -> SwingTwist {
    let (mut w, mut z) = (q.w(), q.z());
    if w.hypot(z) < 1e-12 {
        return SwingTwist {
            swing: *q,
            twist_angle: 0.0,
            degenerate: true,
        };
    }
    if w < 0.0 {
        w = -w;
        z = -z;
    }
    let twist = UnitQuaternion::new(w, 0.0, 0.0, z);
    let swing = q.multiply(&twist.conjugate());
    SwingTwist {
        swing,
        twist_angle: 2.0 * z.atan2(w),
        degenerate: false,
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rz(a: f64) -> UnitQuaternion {
        UnitQuaternion::about(Axis::Z, a)
    }

    fn quat_close(a: &UnitQuaternion, b: &UnitQuaternion, tol: f64) -> bool {
        a.angle_to(b) < tol
    }

    prop_compose! {
        fn any_quat()(w in -1.0..1.0f64, x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64)
            -> UnitQuaternion {
            if (w * w + x * x + y * y + z * z) < 1e-6 { UnitQuaternion::identity() }
            else { UnitQuaternion::new(w, x, y, z) }
        }
    }

    prop_compose! {
        fn any_vec(scale: f64)(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64) -> Vec3 {
            Vec3::new(x, y, z) * scale
        }
    }

    #[test]
    fn identity_and_inverse_products() {
        let q = UnitQuaternion::new(0.3, -0.2, 0.9, 0.1);
        assert_eq!(UnitQuaternion::identity() * q, q);
        let e = q * q.conjugate();
        assert_relative_eq!(e.w(), 1.0, epsilon = 1e-15);
        assert!(e.vector_part().norm() < 1e-15);
    }

    #[test]
    fn quarter_turns_compose_to_half_turn() {
        // Oracle: compose the rotation matrices and convert back.
        let q = rz(PI / 2.0) * rz(PI / 2.0);
        let r = Rotation3::elementary(Axis::Z, PI / 2.0) * Rotation3::elementary(Axis::Z, PI / 2.0);
        let from_matrix = r.to_quaternion();
        assert!(quat_close(&q, &from_matrix, 1e-12));
        let flip = if q.z() < 0.0 { -1.0 } else { 1.0 };
        assert_relative_eq!(q.w() * flip, 0.0, epsilon = 1e-12);
        assert_relative_eq!(q.z() * flip, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn conjugate_is_transpose() {
        let c = rz(PI / 2.0).conjugate();
        assert_eq!(c.conjugate(), rz(PI / 2.0));
        assert_eq!(UnitQuaternion::identity().conjugate(), UnitQuaternion::identity());
        let oracle = Rotation3::elementary(Axis::Z, PI / 2.0).transpose();
        assert!((c.to_rotation().matrix() - oracle.matrix()).norm() < 1e-15);
        assert!(quat_close(&c, &rz(-PI / 2.0), 1e-15));
    }

    #[test]
    fn elementary_rotations() {
        assert_eq!(
            Rotation3::from_axis_angle(&AxisAngle::new(Vec3::z(), 0.0)),
            Rotation3::identity()
        );
        let r = Rotation3::from_axis_angle(&AxisAngle::new(Vec3::z(), PI / 2.0));
        assert_relative_eq!(r.matrix()[(0, 1)], -1.0, epsilon = 1e-15);
        assert_relative_eq!(r.matrix()[(1, 0)], 1.0, epsilon = 1e-15);
        let e = Rotation3::elementary(Axis::Z, PI / 2.0);
        assert!((r.matrix() - e.matrix()).norm() < 1e-15);
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let a = Rotation3::elementary(axis, 0.7);
            let b = Rotation3::from_axis_angle(&AxisAngle::new(axis.unit(), 0.7));
            assert!((a.matrix() - b.matrix()).norm() < 1e-15);
        }
    }

    #[test]
    fn half_turn_log_is_flagged_and_deterministic() {
        let r = Rotation3::elementary(Axis::Y, PI);
        let log = r.log();
        assert!(log.degenerate);
        assert_relative_eq!(log.axis_angle.angle, PI, epsilon = 1e-12);
        assert_relative_eq!(log.axis_angle.axis.y.abs(), 1.0, epsilon = 1e-12);
        assert_eq!(r.log(), log);
        let back = Rotation3::from_axis_angle(&log.axis_angle);
        assert!((back.matrix() - r.matrix()).norm() < 1e-12);
    }

    #[test]
    fn rotate_twist_basics() {
        let v = Twist::new(Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 2.0));
        assert_eq!(rotate_twist(&Rotation3::identity(), &v), v);
        let out = rotate_twist(&Rotation3::elementary(Axis::Z, PI / 2.0), &v);
        assert!((out.linear - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        assert!((out.angular - Vec3::new(0.0, 0.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn swing_twist_elementary_cases() {
        let st = swing_twist_about_z(&rz(0.8));
        assert_relative_eq!(st.twist_angle, 0.8, epsilon = 1e-15);
        assert!(quat_close(&st.swing, &UnitQuaternion::identity(), 1e-15));
        let st = swing_twist_about_z(&UnitQuaternion::about(Axis::X, 0.8));
        assert_eq!(st.twist_angle, 0.0);
        let st = swing_twist_about_z(&UnitQuaternion::about(Axis::X, PI));
        assert!(st.degenerate);
        assert_eq!(st.twist_angle, 0.0);
    }

    #[test]
    fn transform_inverse_is_identity() {
        let t = Transform::new(
            Rotation3::from_rotation_vector(&Vec3::new(0.3, -1.0, 0.2)),
            Vec3::new(1.0, 2.0, -3.0),
        );
        let e = t.compose(&t.inverse());
        assert!((e.rotation.matrix() - Matrix3::identity()).norm() < 1e-15);
        assert!(e.translation.norm() < 1e-15);
    }

    #[test]
    fn wrap_angle_range() {
        assert_relative_eq!(wrap_angle(3.0 * PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(0.5 - 2.0 * PI), 0.5, epsilon = 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn products_stay_unit(a in any_quat(), b in any_quat()) {
            let p = a * b;
            prop_assert!((p.coords().norm() - 1.0).abs() < 1e-9);
            let r = p.to_rotation();
            let m = r.matrix();
            prop_assert!((m * m.transpose() - Matrix3::identity()).norm() < 1e-9);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn rotation_quaternion_round_trip(q in any_quat()) {
            let back = q.to_rotation().to_quaternion();
            prop_assert!((back.dot(&q).abs() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn exp_log_round_trip(q in any_quat()) {
            let r = q.to_rotation();
            let log = r.log();
            prop_assume!(log.axis_angle.angle < PI - 1e-6);
            let back = Rotation3::from_axis_angle(&log.axis_angle);
            prop_assert!((back.matrix() - r.matrix()).norm() < 1e-9);
        }

        #[test]
        fn rotate_twist_is_isometry(q in any_quat(), l in any_vec(5.0), w in any_vec(5.0)) {
            let v = Twist::new(l, w);
            let out = rotate_twist(&q.to_rotation(), &v);
            prop_assert!((out.linear.norm() - l.norm()).abs() < 1e-12);
            prop_assert!((out.angular.norm() - w.norm()).abs() < 1e-12);
        }

        #[test]
        fn rotate_twist_composes(a in any_quat(), b in any_quat(), l in any_vec(2.0), w in any_vec(2.0)) {
            let v = Twist::new(l, w);
            let (ra, rb) = (a.to_rotation(), b.to_rotation());
            let lhs = rotate_twist(&(ra * rb), &v);
            let rhs = rotate_twist(&ra, &rotate_twist(&rb, &v));
            prop_assert!((lhs.linear - rhs.linear).norm() < 1e-12);
            prop_assert!((lhs.angular - rhs.angular).norm() < 1e-12);
        }

        #[test]
        fn swing_twist_reconstructs(q in any_quat()) {
            let st = swing_twist_about_z(&q);
            prop_assume!(!st.degenerate);
            let rebuilt = st.swing * rz(st.twist_angle);
            prop_assert!(quat_close(&rebuilt, &q, 1e-9));
            // The swing axis has no z component.
            prop_assert!(st.swing.z().abs() < 1e-9);
        }

        #[test]
        fn swing_twist_recovers_roll(t in -3.1..3.1f64, tilt in -1.0..1.0f64) {
            let q = UnitQuaternion::about(Axis::X, tilt) * rz(t);
            let st = swing_twist_about_z(&q);
            prop_assert!((st.twist_angle - t).abs() < 1e-9);
        }

        #[test]
        fn compose_is_associative(a in any_quat(), b in any_quat(), c in any_quat(),
                                  pa in any_vec(1.0), pb in any_vec(1.0), pc in any_vec(1.0)) {
            let ta = Transform::new(a.to_rotation(), pa);
            let tb = Transform::new(b.to_rotation(), pb);
            let tc = Transform::new(c.to_rotation(), pc);
            let l = ta.compose(&tb).compose(&tc);
            let r = ta.compose(&tb.compose(&tc));
            prop_assert!((l.rotation.matrix() - r.rotation.matrix()).norm() < 1e-12);
            prop_assert!((l.translation - r.translation).norm() < 1e-12);
        }

        #[test]
        fn quaternion_rotate_matches_matrix(q in any_quat(), v in any_vec(3.0)) {
            prop_assert!((q.rotate(&v) - q.to_rotation().rotate(&v)).norm() < 1e-12);
        }
    }
}
