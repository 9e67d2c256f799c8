//! Rigid-body and pinhole-camera math.
//!
//! Camera frames follow the usual computer-vision convention: `x` points right,
//! `y` points down and `z` points forward along the optical axis. A [`Pose`]
//! is always camera-to-world, so `p_world = pose * p_camera`.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Elementwise tolerance on `RᵀR = I` and `det R = 1`.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// `|R31|` above `1 - GIMBAL_MARGIN` is reported as gimbal lock.
pub const GIMBAL_MARGIN: f64 = 1e-6;

/// Camera-frame depth below which a point counts as behind the camera.
pub const MIN_CAMERA_DEPTH: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("matrix is not a proper rotation (orthonormality error {orthonormality:.3e}, det {det})")]
    NotARotation { orthonormality: f64, det: f64 },
    #[error("pitch/yaw/roll extraction is singular: |R31| = {r31}")]
    GimbalLock { r31: f64 },
    #[error("invalid depth {0}")]
    InvalidDepth(f64),
    #[error("point is behind the camera (camera-frame z = {0})")]
    BehindCamera(f64),
    #[error("camera origin coincides with the observed point")]
    DegenerateRay,
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// A proper rotation, stored as a 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates orthonormality and determinant.
    pub fn new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let orthonormality = orthonormality_error(&m);
        let det = m.determinant();
        if !(orthonormality <= ROTATION_TOLERANCE) || !((det - 1.0).abs() <= ROTATION_TOLERANCE) {
            return Err(GeometryError::NotARotation { orthonormality, det });
        }
        Ok(Self(m))
    }

    /// Wraps a matrix the caller knows to be a rotation.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    /// Row-major 3×3 entries.
    pub fn from_row_slice(rows: &[f64; 9]) -> Result<Self, GeometryError> {
        Self::new(Matrix3::from_row_slice(rows))
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

    /// Rodrigues rotation about a (not necessarily unit) axis.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        let k = axis / n;
        let kx = skew(&k);
        let (s, c) = angle.sin_cos();
        Self(Matrix3::identity() + kx * s + kx * kx * (1.0 - c))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    /// Rotation angle of `self⁻¹ · other`, in radians.
    pub fn geodesic_distance(&self, other: &RotationMatrix) -> f64 {
        let delta = self.0.transpose() * other.0;
        ((delta.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.0)
    }

    pub fn to_row_array(&self) -> [f64; 9] {
        let m = &self.0;
        [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(2, 0)], m[(2, 1)], m[(2, 2)]]
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for RotationMatrix {
    type Output = Vector3<f64>;

    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// Largest elementwise deviation of `MᵀM` from the identity.
pub fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).abs().max()
}

/// Cross-product matrix `[v]×`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: RotationMatrix,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: RotationMatrix, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(RotationMatrix::identity(), Vector3::zeros())
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(RotationMatrix::identity(), Vector3::new(x, y, z))
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// Camera center in the parent frame.
    pub fn origin(&self) -> WorldPoint {
        WorldPoint(Point3::from(self.translation))
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Sixteen row-major entries of the homogeneous matrix.
    pub fn to_row_major(&self) -> [f64; 16] {
        let m = self.to_homogeneous();
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = m[(r, c)];
            }
        }
        out
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        Pose::new(self.rotation * rhs.rotation, self.rotation * rhs.translation + self.translation)
    }
}

/// Motion of the target camera expressed in the source camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseVector {
    /// Rotation about the camera x axis, radians.
    pub pitch: f64,
    /// Rotation about the camera y axis, radians.
    pub yaw: f64,
    /// Rotation about the camera z axis, radians.
    pub roll: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl PoseVector {
    pub fn from_relative(rel: &Pose) -> Result<Self, GeometryError> {
        let (pitch, yaw, roll) = euler_from_rotation(&rel.rotation)?;
        Ok(Self { pitch, yaw, roll, tx: rel.translation.x, ty: rel.translation.y, tz: rel.translation.z })
    }

    /// Components in `(pitch, yaw, roll, tx, ty, tz)` order.
    pub fn components(&self) -> [f64; 6] {
        [self.pitch, self.yaw, self.roll, self.tx, self.ty, self.tz]
    }

    pub fn from_components(c: [f64; 6]) -> Self {
        Self { pitch: c[0], yaw: c[1], roll: c[2], tx: c[3], ty: c[4], tz: c[5] }
    }

    /// Rebuilds the relative transform this vector describes.
    pub fn to_pose(&self) -> Pose {
        Pose::new(rotation_from_euler(self.pitch, self.yaw, self.roll), Vector3::new(self.tx, self.ty, self.tz))
    }
}

/// Zero-skew pinhole intrinsics together with the image size they apply to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::InvalidIntrinsics("non-finite parameter".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx {}, fy {})",
                self.fx, self.fy
            )));
        }
        if !(0.0 <= self.cx && self.cx < f64::from(self.width)) {
            return Err(GeometryError::InvalidIntrinsics(format!("cx {} outside [0, {})", self.cx, self.width)));
        }
        if !(0.0 <= self.cy && self.cy < f64::from(self.height)) {
            return Err(GeometryError::InvalidIntrinsics(format!("cy {} outside [0, {})", self.cy, self.height)));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Pixel to normalized image coordinates (`z = 1`).
    pub fn normalize(&self, p: &PixelPoint) -> Vector3<f64> {
        Vector3::new((p.u - self.cx) / self.fx, (p.v - self.cy) / self.fy, 1.0)
    }

    /// Normalized image coordinates back to pixels.
    pub fn denormalize(&self, x: f64, y: f64) -> PixelPoint {
        PixelPoint::new(self.fx * x + self.cx, self.fy * y + self.cy)
    }

    /// The image center pixel, `(width / 2, height / 2)` in integer pixels.
    pub fn center_pixel(&self) -> PixelPoint {
        PixelPoint::new(f64::from(self.width / 2), f64::from(self.height / 2))
    }

    pub fn contains(&self, p: &PixelPoint) -> bool {
        p.u >= 0.0 && p.v >= 0.0 && p.u < f64::from(self.width) && p.v < f64::from(self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldPoint(pub Point3<f64>);

impl WorldPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Point3::new(x, y, z))
    }
}

/// Pose of `tgt` expressed in the frame of `src`: `src⁻¹ · tgt`.
pub fn relative_pose(src: &Pose, tgt: &Pose) -> Pose {
    src.inverse() * *tgt
}

/// Extracts `(pitch, yaw, roll)` from `R = Rz(roll) · Ry(yaw) · Rx(pitch)`.
pub fn euler_from_rotation(r: &RotationMatrix) -> Result<(f64, f64, f64), GeometryError> {
    let m = r.matrix();
    let r31 = m[(2, 0)];
    if r31.abs() > 1.0 - GIMBAL_MARGIN {
        return Err(GeometryError::GimbalLock { r31 });
    }
    let pitch = m[(2, 1)].atan2(m[(2, 2)]);
    let yaw = (-r31).clamp(-1.0, 1.0).asin();
    let roll = m[(1, 0)].atan2(m[(0, 0)]);
    Ok((wrap_angle(pitch), yaw, wrap_angle(roll)))
}

/// `Rz(roll) · Ry(yaw) · Rx(pitch)`.
pub fn rotation_from_euler(pitch: f64, yaw: f64, roll: f64) -> RotationMatrix {
    RotationMatrix::about_z(roll) * RotationMatrix::about_y(yaw) * RotationMatrix::about_x(pitch)
}

/// Maps `-π` onto `π` so angles live in `(-π, π]`.
fn wrap_angle(a: f64) -> f64 {
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

pub fn pose_vector(src: &Pose, tgt: &Pose) -> Result<PoseVector, GeometryError> {
    PoseVector::from_relative(&relative_pose(src, tgt))
}

/// Lifts a pixel with known z-depth into the world frame.
pub fn unproject(p: &PixelPoint, depth: f64, k: &Intrinsics, pose: &Pose) -> Result<WorldPoint, GeometryError> {
    if !depth.is_finite() || depth <= 0.0 {
        return Err(GeometryError::InvalidDepth(depth));
    }
    let ray = k.normalize(p);
    Ok(WorldPoint(pose.transform_point(&Point3::from(ray * depth))))
}

/// Projects a world point into the image of the camera at `pose`.
///
/// The result may fall outside the image bounds.
pub fn reproject(p: &WorldPoint, k: &Intrinsics, pose: &Pose) -> Result<PixelPoint, GeometryError> {
    let cam = pose.inverse().transform_point(&p.0);
    if !(cam.z > MIN_CAMERA_DEPTH) {
        return Err(GeometryError::BehindCamera(cam.z));
    }
    Ok(k.denormalize(cam.x / cam.z, cam.y / cam.z))
}

/// Angle at `p_w` between the rays towards two camera origins, in degrees.
pub fn viewing_angle(p_w: &WorldPoint, origin_i: &WorldPoint, origin_j: &WorldPoint) -> Result<f64, GeometryError> {
    let a = origin_i.0 - p_w.0;
    let b = origin_j.0 - p_w.0;
    let (na, nb) = (a.norm(), b.norm());
    if na <= MIN_CAMERA_DEPTH || nb <= MIN_CAMERA_DEPTH {
        return Err(GeometryError::DegenerateRay);
    }
    let cos = (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0);
    Ok(cos.acos().to_degrees())
}

pub fn center_deviation(a: &PixelPoint, b: &PixelPoint) -> f64 {
    (a.u - b.u).hypot(a.v - b.v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn kinect() -> Intrinsics {
        Intrinsics::new(525.0, 525.0, 319.5, 239.5, 640, 480).unwrap()
    }

    fn random_pose(a: [f64; 3], t: [f64; 3]) -> Pose {
        Pose::new(rotation_from_euler(a[0], a[1], a[2]), Vector3::from(t))
    }

    fn assert_pose_eq(a: &Pose, b: &Pose, tol: f64) {
        let d = a.to_homogeneous() - b.to_homogeneous();
        assert!(d.abs().max() <= tol, "poses differ by {}", d.abs().max());
    }

    #[test]
    fn relative_pose_of_self_is_identity() {
        let t = random_pose([0.3, -0.2, 1.1], [1.0, 2.0, -0.5]);
        assert_pose_eq(&relative_pose(&t, &t), &Pose::identity(), 1e-12);
    }

    #[test]
    fn relative_pose_pure_translation() {
        let rel = relative_pose(&Pose::identity(), &Pose::from_translation(1.0, 0.0, 0.0));
        assert_eq!(rel.rotation, RotationMatrix::identity());
        assert_eq!(rel.translation, Vector3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn relative_pose_matches_homogeneous_product() {
        let a = random_pose([0.1, 0.7, -2.0], [0.5, -1.0, 3.0]);
        let b = random_pose([-1.2, 0.3, 0.4], [2.0, 0.1, -0.3]);
        let direct = a.to_homogeneous().try_inverse().unwrap() * b.to_homogeneous();
        let d = relative_pose(&a, &b).to_homogeneous() - direct;
        assert!(d.abs().max() < 1e-12);
    }

    #[test]
    fn euler_identity_and_single_axis() {
        assert_eq!(euler_from_rotation(&RotationMatrix::identity()).unwrap(), (0.0, 0.0, 0.0));
        let (p, y, r) = euler_from_rotation(&RotationMatrix::about_y(0.1)).unwrap();
        assert_abs_diff_eq!(p, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(y, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn euler_round_trip_fixed_triple() {
        let (p, y, r) = euler_from_rotation(&rotation_from_euler(0.1, 0.2, 0.3)).unwrap();
        assert_abs_diff_eq!(p, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(y, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(r, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn gimbal_lock_is_reported() {
        let r = rotation_from_euler(0.2, std::f64::consts::FRAC_PI_2, 0.1);
        assert!(matches!(euler_from_rotation(&r), Err(GeometryError::GimbalLock { .. })));
    }

    #[test]
    fn rotation_from_euler_matches_axis_angle() {
        assert_eq!(rotation_from_euler(0.0, 0.0, 0.0), RotationMatrix::identity());
        let angle = std::f64::consts::FRAC_PI_4;
        let r = rotation_from_euler(0.0, angle, 0.0);
        let oracle = RotationMatrix::from_axis_angle(&Vector3::y(), angle);
        let z = Vector3::z();
        let (a, b) = (r * z, oracle * z);
        assert!((a - b).norm() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((a - Vector3::new(h, 0.0, h)).norm() < 1e-15);
    }

    #[test]
    fn pose_vector_examples() {
        let t = random_pose([0.3, 0.2, 0.1], [4.0, 5.0, 6.0]);
        assert_eq!(pose_vector(&t, &t).unwrap().components().map(|c| (c.abs() < 1e-12) as u8), [1; 6]);
        let v = pose_vector(&Pose::identity(), &Pose::from_translation(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(v.components(), [0.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn pose_vector_swap_gives_inverse_rotation() {
        let a = random_pose([0.3, -0.4, 0.2], [1.0, 0.0, 2.0]);
        let b = random_pose([-0.1, 0.5, 0.7], [0.0, 1.0, -1.0]);
        let ab = pose_vector(&a, &b).unwrap().to_pose();
        let ba = pose_vector(&b, &a).unwrap().to_pose();
        let product = ab.rotation.matrix() * ba.rotation.matrix();
        assert!((product - Matrix3::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn unproject_examples() {
        let k = kinect();
        let p = unproject(&PixelPoint::new(k.cx, k.cy), 2.0, &k, &Pose::identity()).unwrap();
        assert_eq!(p, WorldPoint::new(0.0, 0.0, 2.0));
        let p = unproject(&PixelPoint::new(k.cx + k.fx, k.cy), 1.0, &k, &Pose::identity()).unwrap();
        assert_eq!(p, WorldPoint::new(1.0, 0.0, 1.0));
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                unproject(&PixelPoint::new(1.0, 1.0), bad, &k, &Pose::identity()),
                Err(GeometryError::InvalidDepth(_))
            ));
        }
    }

    #[test]
    fn reproject_examples() {
        let k = kinect();
        let p = reproject(&WorldPoint::new(0.0, 0.0, 2.0), &k, &Pose::identity()).unwrap();
        assert_eq!(p, PixelPoint::new(k.cx, k.cy));
        let p = reproject(&WorldPoint::new(1.0, 0.0, 1.0), &k, &Pose::identity()).unwrap();
        assert_eq!(p, PixelPoint::new(k.cx + k.fx, k.cy));
        assert!(matches!(
            reproject(&WorldPoint::new(0.0, 0.0, -1.0), &k, &Pose::identity()),
            Err(GeometryError::BehindCamera(_))
        ));
    }

    #[test]
    fn viewing_angle_examples() {
        let o = WorldPoint::new(0.0, 0.0, 0.0);
        let a = WorldPoint::new(1.0, 0.0, 0.0);
        assert_eq!(viewing_angle(&o, &a, &a).unwrap(), 0.0);
        let b = WorldPoint::new(0.0, 1.0, 0.0);
        assert_abs_diff_eq!(viewing_angle(&o, &a, &b).unwrap(), 90.0, epsilon = 1e-12);
        assert_eq!(viewing_angle(&o, &o, &b), Err(GeometryError::DegenerateRay));
    }

    #[test]
    fn viewing_angle_of_analytic_orbit() {
        let center = WorldPoint::new(1.0, -2.0, 0.5);
        let radius = 3.7;
        let at = |deg: f64| {
            let a = deg.to_radians();
            WorldPoint::new(center.0.x + radius * a.cos(), center.0.y, center.0.z + radius * a.sin())
        };
        assert_abs_diff_eq!(viewing_angle(&center, &at(12.0), &at(42.0)).unwrap(), 30.0, epsilon = 1e-6);
    }

    #[test]
    fn center_deviation_examples() {
        let a = PixelPoint::new(0.0, 0.0);
        let b = PixelPoint::new(3.0, 4.0);
        assert_eq!(center_deviation(&a, &a), 0.0);
        assert_eq!(center_deviation(&a, &b), 5.0);
        assert_eq!(center_deviation(&b, &a), 5.0);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(Intrinsics::new(0.0, 1.0, 1.0, 1.0, 10, 10).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 10.0, 1.0, 10, 10).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 1.0, -0.5, 10, 10).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 0.0, 0.0, 10, 10).is_ok());
    }

    #[test]
    fn reflection_is_not_a_rotation() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(matches!(RotationMatrix::new(m), Err(GeometryError::NotARotation { .. })));
    }

    fn angle() -> impl Strategy<Value = f64> {
        -PI + 1e-6..PI
    }

    fn pose_strategy() -> impl Strategy<Value = Pose> {
        (angle(), -1.5..1.5f64, angle(), prop::array::uniform3(-10.0..10.0f64))
            .prop_map(|(p, y, r, t)| random_pose([p, y, r], t))
    }

    proptest! {
        #[test]
        // The gimbal margin on |R31| excludes yaw within about 1.4e-3 rad of the poles.
        fn euler_round_trip(p in angle(), y in -(PI / 2.0 - 2e-3)..(PI / 2.0 - 2e-3), r in angle()) {
            let (p2, y2, r2) = euler_from_rotation(&rotation_from_euler(p, y, r)).unwrap();
            prop_assert!((p - p2).abs() < 1e-9 && (y - y2).abs() < 1e-9 && (r - r2).abs() < 1e-9);
        }

        #[test]
        fn composition_and_closure(a in pose_strategy(), b in pose_strategy(), c in pose_strategy()) {
            let ab = relative_pose(&a, &b);
            let bc = relative_pose(&b, &c);
            let ac = relative_pose(&a, &c);
            prop_assert!(((ab * bc).to_homogeneous() - ac.to_homogeneous()).abs().max() < 1e-9);
            prop_assert!(RotationMatrix::new(*ab.rotation.matrix()).is_ok());
            let ba = relative_pose(&b, &a);
            prop_assert!((ab.to_homogeneous() - ba.inverse().to_homogeneous()).abs().max() < 1e-9);
            let round = a.inverse() * a;
            prop_assert!((round.to_homogeneous() - Matrix4::identity()).abs().max() < 1e-9);
        }

        #[test]
        fn projection_round_trip(pose in pose_strategy(), u in 0.0..640.0f64, v in 0.0..480.0f64, d in 0.1..100.0f64) {
            let k = kinect();
            let p = PixelPoint::new(u, v);
            let back = reproject(&unproject(&p, d, &k, &pose).unwrap(), &k, &pose).unwrap();
            prop_assert!(center_deviation(&p, &back) < 1e-6);
        }

        #[test]
        fn viewing_angle_symmetric_and_bounded(
            p in prop::array::uniform3(-5.0..5.0f64),
            a in prop::array::uniform3(-5.0..5.0f64),
            b in prop::array::uniform3(-5.0..5.0f64),
        ) {
            let (p, a, b) = (WorldPoint::new(p[0], p[1], p[2]), WorldPoint::new(a[0], a[1], a[2]), WorldPoint::new(b[0], b[1], b[2]));
            if let (Ok(x), Ok(y)) = (viewing_angle(&p, &a, &b), viewing_angle(&p, &b, &a)) {
                prop_assert_eq!(x, y);
                prop_assert!((0.0..=180.0).contains(&x));
            }
        }
    }
}
