//! Coordinate frames and the pixel → camera → robot transform chain.
//!
//! Conventions used throughout the crate:
//!
//! * Millimetres everywhere. RGB-D depth is optical-axis distance in mm.
//! * The robot base frame has `z` pointing up, away from the specimen surface.
//! * A [`RigidTransform`] named `a_to_b` maps points expressed in frame `a`
//!   into frame `b`. The camera extrinsics therefore map camera points into
//!   the robot base frame, and the laser mount maps laser points into it.
//! * A *horizontal* crack runs along the robot `y` axis; its cross-section is
//!   profiled along `x`. A *vertical* crack runs along `x` and is profiled
//!   along `y`. This matches the camera mount used by the default scenario,
//!   where the image `u` axis is aligned with robot `y`.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("pixel depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("point is expressed in the {actual:?} frame but the transform expects {expected:?}")]
    FrameMismatch { expected: Frame, actual: Frame },
    #[error("rotation is not orthonormal with determinant +1 (orthogonality error {ortho_err:e}, det {det})")]
    InvalidRotation { ortho_err: f64, det: f64 },
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Frame tag carried by every [`Point3`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Camera,
    Laser,
    Robot,
}

/// Dominant crack direction in the robot frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CrackOrientation {
    /// Runs along robot `y`; profiled along `x`.
    #[default]
    Horizontal,
    /// Runs along robot `x`; profiled along `y`.
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub frame: Frame,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64, frame: Frame) -> Self {
        Self { x, y, z, frame }
    }

    pub fn robot(x: f64, y: f64, z: f64) -> Self {
        Self::new(x, y, z, Frame::Robot)
    }

    pub fn coords(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    fn from_coords(v: Vector3<f64>, frame: Frame) -> Self {
        Self::new(v.x, v.y, v.z, frame)
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (self.coords() - other.coords()).norm()
    }
}

/// Image location with the RGB-D depth read at it.
///
/// Integer `(u, v)` values address pixel centres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
    /// Optical-axis depth `z_c` in mm.
    pub depth: f64,
}

impl PixelCoord {
    pub fn new(u: f64, v: f64, depth: f64) -> Self {
        Self { u, v, depth }
    }
}

/// Pinhole intrinsics (no distortion).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntrinsicsDto", into = "IntrinsicsDto")]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    px: f64,
    py: f64,
    image_width: usize,
    image_height: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntrinsicsDto {
    fx: f64,
    fy: f64,
    px: f64,
    py: f64,
    image_width: usize,
    image_height: usize,
}

impl TryFrom<IntrinsicsDto> for CameraIntrinsics {
    type Error = GeometryError;

    fn try_from(d: IntrinsicsDto) -> Result<Self, Self::Error> {
        CameraIntrinsics::new(d.fx, d.fy, d.px, d.py, d.image_width, d.image_height)
    }
}

impl From<CameraIntrinsics> for IntrinsicsDto {
    fn from(k: CameraIntrinsics) -> Self {
        IntrinsicsDto {
            fx: k.fx,
            fy: k.fy,
            px: k.px,
            py: k.py,
            image_width: k.image_width,
            image_height: k.image_height,
        }
    }
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        px: f64,
        py: f64,
        image_width: usize,
        image_height: usize,
    ) -> Result<Self, GeometryError> {
        if !(fx.is_finite() && fy.is_finite() && px.is_finite() && py.is_finite()) {
            return Err(GeometryError::NonFinite("camera intrinsics"));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(format!("focal lengths must be positive (fx={fx}, fy={fy})")));
        }
        if !(0.0..image_width as f64).contains(&px) || !(0.0..image_height as f64).contains(&py) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({px}, {py}) outside {image_width}x{image_height} image"
            )));
        }
        Ok(Self { fx, fy, px, py, image_width, image_height })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn px(&self) -> f64 {
        self.px
    }
    pub fn py(&self) -> f64 {
        self.py
    }
    pub fn image_width(&self) -> usize {
        self.image_width
    }
    pub fn image_height(&self) -> usize {
        self.image_height
    }

    /// The 3×3 `K` matrix.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.px, 0.0, self.fy, self.py, 0.0, 0.0, 1.0)
    }

    /// Projects a camera-frame point to `(u, v)`.
    pub fn project(&self, p: &Point3) -> Result<(f64, f64), GeometryError> {
        expect_frame(p, Frame::Camera)?;
        if p.z <= 0.0 {
            return Err(GeometryError::NonPositiveDepth(p.z));
        }
        Ok((self.fx * p.x / p.z + self.px, self.fy * p.y / p.z + self.py))
    }

    /// Camera-frame ray direction through `(u, v)`, scaled so that `z = 1`.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.px) / self.fx, (v - self.py) / self.fy, 1.0)
    }
}

/// Back-projects a pixel with known optical-axis depth into the camera frame.
///
/// Computes `K⁻¹ · z_c · [u, v, 1]ᵀ` in closed form; `result.z == p.depth`.
pub fn pixel_to_camera(p: &PixelCoord, k: &CameraIntrinsics) -> Result<Point3, GeometryError> {
    if !(p.depth > 0.0) {
        return Err(GeometryError::NonPositiveDepth(p.depth));
    }
    let x = (p.u - k.px) / k.fx * p.depth;
    let y = (p.v - k.py) / k.fy * p.depth;
    Ok(Point3::new(x, y, p.depth, Frame::Camera))
}

/// Orthonormal rotation plus translation (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformDto", into = "TransformDto")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// Row-major JSON form: `{"rotation": [9 numbers], "translation": [3 numbers]}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformDto {
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl TryFrom<TransformDto> for RigidTransform {
    type Error = GeometryError;

    fn try_from(d: TransformDto) -> Result<Self, Self::Error> {
        let r = Matrix3::from_row_slice(&d.rotation);
        RigidTransform::new(r, Vector3::from(d.translation))
    }
}

impl From<RigidTransform> for TransformDto {
    fn from(t: RigidTransform) -> Self {
        let r = t.rotation;
        TransformDto {
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    /// Rejects rotations that are not orthonormal with determinant +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("rigid transform"));
        }
        let ortho_err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if ortho_err > ORTHONORMAL_TOL || (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(GeometryError::InvalidRotation { ortho_err, det });
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::new(x, y, z) }
    }

    /// Rotation of `angle` radians about `axis`, followed by `translation`.
    /// A zero axis yields the identity rotation.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = match Unit::try_new(axis, 1e-12) {
            Some(axis) => *Rotation3::from_axis_angle(&axis, angle).matrix(),
            None => Matrix3::identity(),
        };
        Self { rotation, translation }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v + self.translation
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Largest absolute entry difference across rotation and translation.
    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        let r = (self.rotation - other.rotation).abs().max();
        let t = (self.translation - other.translation).abs().max();
        r.max(t)
    }
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

/// A transform annotated with the frames it connects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTransform {
    pub source: Frame,
    pub target: Frame,
    pub transform: RigidTransform,
}

impl FrameTransform {
    pub fn new(source: Frame, target: Frame, transform: RigidTransform) -> Self {
        Self { source, target, transform }
    }

    pub fn camera_to_robot(transform: RigidTransform) -> Self {
        Self::new(Frame::Camera, Frame::Robot, transform)
    }

    pub fn laser_to_robot(transform: RigidTransform) -> Self {
        Self::new(Frame::Laser, Frame::Robot, transform)
    }
}

/// Maps `p` through `t`, retagging the result with `t.target`.
pub fn transform_point(p: &Point3, t: &FrameTransform) -> Result<Point3, GeometryError> {
    expect_frame(p, t.source)?;
    Ok(Point3::from_coords(t.transform.apply(&p.coords()), t.target))
}

/// Laser-frame crack centre built from the profile centre `(c_x, c_y)`.
pub fn laser_correction(c_x: f64, c_y: f64, orientation: CrackOrientation) -> Point3 {
    match orientation {
        CrackOrientation::Horizontal => Point3::new(c_x, 0.0, c_y, Frame::Laser),
        CrackOrientation::Vertical => Point3::new(0.0, c_x, c_y, Frame::Laser),
    }
}

fn expect_frame(p: &Point3, expected: Frame) -> Result<(), GeometryError> {
    if p.frame != expected {
        return Err(GeometryError::FrameMismatch { expected, actual: p.frame });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn k600() -> CameraIntrinsics {
        CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn inverse_k_oracle(k: &CameraIntrinsics, u: f64, v: f64, z: f64) -> Vector3<f64> {
        k.matrix().try_inverse().unwrap() * (Vector3::new(u, v, 1.0) * z)
    }

    #[test]
    fn principal_point_maps_to_optical_axis() {
        let p = pixel_to_camera(&PixelCoord::new(320.0, 240.0, 500.0), &k600()).unwrap();
        assert_eq!((p.x, p.y, p.z), (0.0, 0.0, 500.0));
        assert_eq!(p.frame, Frame::Camera);
    }

    #[test]
    fn off_axis_pixel_matches_inverse_matrix() {
        let k = k600();
        let p = pixel_to_camera(&PixelCoord::new(920.0, 240.0, 500.0), &k).unwrap();
        let oracle = inverse_k_oracle(&k, 920.0, 240.0, 500.0);
        assert!((p.coords() - oracle).norm() < 1e-9);
        assert!((p.x - 500.0).abs() < 1e-12);
        assert_eq!(p.z, 500.0);
    }

    #[test]
    fn zero_depth_rejected() {
        let err = pixel_to_camera(&PixelCoord::new(320.0, 240.0, 0.0), &k600()).unwrap_err();
        assert_eq!(err, GeometryError::NonPositiveDepth(0.0));
        assert!(pixel_to_camera(&PixelCoord::new(1.0, 1.0, f64::NAN), &k600()).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 600.0, 320.0, 240.0, 640, 480).is_err());
        assert!(CameraIntrinsics::new(600.0, 600.0, 640.0, 240.0, 640, 480).is_err());
        assert!(CameraIntrinsics::new(600.0, 600.0, 320.0, -1.0, 640, 480).is_err());
    }

    #[test]
    fn identity_retags_frame() {
        let t = FrameTransform::camera_to_robot(RigidTransform::identity());
        let p = transform_point(&Point3::new(1.0, 2.0, 3.0, Frame::Camera), &t).unwrap();
        assert_eq!(p, Point3::robot(1.0, 2.0, 3.0));
    }

    #[test]
    fn quarter_turn_about_z_with_offset() {
        let rt = RigidTransform::from_axis_angle(Vector3::z(), FRAC_PI_2, Vector3::new(10.0, 0.0, 0.0));
        // Hand multiply: Rz(90°) = [[0,-1,0],[1,0,0],[0,0,1]]; R·(1,0,0) = (0,1,0).
        let t = FrameTransform::camera_to_robot(rt);
        let p = transform_point(&Point3::new(1.0, 0.0, 0.0, Frame::Camera), &t).unwrap();
        assert!((p.x - 10.0).abs() < 1e-12);
        assert!((p.y - 1.0).abs() < 1e-12);
        assert!(p.z.abs() < 1e-12);
    }

    #[test]
    fn wrong_source_frame_rejected() {
        let t = FrameTransform::camera_to_robot(RigidTransform::identity());
        let err = transform_point(&Point3::new(0.0, 0.0, 0.0, Frame::Laser), &t).unwrap_err();
        assert_eq!(err, GeometryError::FrameMismatch { expected: Frame::Camera, actual: Frame::Laser });
    }

    #[test]
    fn laser_correction_mappings() {
        let h = laser_correction(1.2, -0.5, CrackOrientation::Horizontal);
        assert_eq!((h.x, h.y, h.z, h.frame), (1.2, 0.0, -0.5, Frame::Laser));
        let v = laser_correction(1.2, -0.5, CrackOrientation::Vertical);
        assert_eq!((v.x, v.y, v.z), (0.0, 1.2, -0.5));
        let c = laser_correction(0.0, 0.0, CrackOrientation::Horizontal);
        assert_eq!((c.x, c.y, c.z), (0.0, 0.0, 0.0));
    }

    #[test]
    fn inverse_and_compose_basics() {
        assert_eq!(invert(&RigidTransform::identity()), RigidTransform::identity());
        let sum =
            compose(&RigidTransform::from_translation(1.0, 0.0, 0.0), &RigidTransform::from_translation(0.0, 1.0, 0.0));
        assert_eq!(sum, RigidTransform::from_translation(1.0, 1.0, 0.0));
    }

    #[test]
    fn non_orthonormal_rotation_rejected() {
        let scaled = Matrix3::identity() * 1.001;
        assert!(matches!(RigidTransform::new(scaled, Vector3::zeros()), Err(GeometryError::InvalidRotation { .. })));
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(reflection, Vector3::zeros()).is_err());
    }

    #[test]
    fn transform_json_is_row_major() {
        let rt = RigidTransform::from_axis_angle(Vector3::z(), FRAC_PI_2, Vector3::new(1.0, 2.0, 3.0));
        let json = serde_json::to_value(rt).unwrap();
        let rot: Vec<f64> = serde_json::from_value(json["rotation"].clone()).unwrap();
        // Row 0 of Rz(90°) is (0, -1, 0).
        assert!((rot[1] + 1.0).abs() < 1e-12);
        assert!((rot[3] - 1.0).abs() < 1e-12);
        assert_eq!(json["translation"], serde_json::json!([1.0, 2.0, 3.0]));
        let back: RigidTransform = serde_json::from_value(json).unwrap();
        assert!(back.max_abs_diff(&rt) < 1e-15);

        let bad = serde_json::json!({"rotation": [2,0,0, 0,1,0, 0,0,1], "translation": [0,0,0]});
        assert!(serde_json::from_value::<RigidTransform>(bad).is_err());
    }

    #[test]
    fn intrinsics_json_validates() {
        let k: CameraIntrinsics = serde_json::from_value(serde_json::json!({
            "fx": 600.0, "fy": 600.0, "px": 320.0, "py": 240.0,
            "image_width": 640, "image_height": 480
        }))
        .unwrap();
        assert_eq!(k, k600());
        let bad = serde_json::json!({
            "fx": -1.0, "fy": 600.0, "px": 320.0, "py": 240.0,
            "image_width": 640, "image_height": 480
        });
        assert!(serde_json::from_value::<CameraIntrinsics>(bad).is_err());
    }
}
