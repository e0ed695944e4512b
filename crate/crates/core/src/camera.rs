//! Pinhole camera model, poses and rotation helpers.
//!
//! Pixel coordinates are continuous with the origin at the center of the
//! top-left pixel, so pixel `(i, j)` covers `[i - 0.5, i + 0.5] x [j - 0.5, j + 0.5]`.
//! Camera frame: x right, y down, z along the optical axis.

use nalgebra::{Matrix3, Point2, Point3, Rotation3, Unit, UnitVector3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `RᵀR = I` and `det R = 1` when validating a pose.
pub const ROTATION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("pixel ({u}, {v}) lies outside the {width}x{height} image")]
    PixelOutOfBounds {
        u: f64,
        v: f64,
        width: u32,
        height: u32,
    },
    #[error("invalid rotation: {0}")]
    InvalidRotation(String),
    #[error("expected {expected} values for {field}, got {got}")]
    WrongLength {
        field: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Pinhole intrinsics of an undistorted image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIntrinsics", into = "RawIntrinsics")]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

#[derive(Serialize, Deserialize)]
struct RawIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

impl TryFrom<RawIntrinsics> for CameraIntrinsics {
    type Error = GeometryError;

    fn try_from(r: RawIntrinsics) -> Result<Self, Self::Error> {
        CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

impl From<CameraIntrinsics> for RawIntrinsics {
    fn from(k: CameraIntrinsics) -> Self {
        RawIntrinsics {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
        }
    }
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        if !(fx.is_finite() && fx > 0.0 && fy.is_finite() && fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !(cx > 0.0 && cx < width as f64 && cy > 0.0 && cy < height as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) must lie strictly inside {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Square-pixel camera with the principal point at the image center and
    /// the given horizontal field of view.
    pub fn from_horizontal_fov(
        width: u32,
        height: u32,
        hfov_rad: f64,
    ) -> Result<Self, GeometryError> {
        if !(hfov_rad > 0.0 && hfov_rad < std::f64::consts::PI) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "field of view {hfov_rad} rad outside (0, pi)"
            )));
        }
        let f = 0.5 * width as f64 / (0.5 * hfov_rad).tan();
        let cx = 0.5 * width as f64 - 0.5;
        let cy = 0.5 * height as f64 - 0.5;
        Self::new(f, f, cx, cy, width, height)
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn principal_point(&self) -> Point2<f64> {
        Point2::new(self.cx, self.cy)
    }

    /// True when the pixel lies within the image area (sub-pixel positions included).
    pub fn contains(&self, pixel: &Point2<f64>) -> bool {
        pixel.x >= -0.5
            && pixel.y >= -0.5
            && pixel.x <= self.width as f64 - 0.5
            && pixel.y <= self.height as f64 - 0.5
    }

    /// `K⁻¹ [u, v, 1]ᵀ`, the unnormalized ray with unit z component.
    pub fn back_project(&self, pixel: &Point2<f64>) -> Vector3<f64> {
        Vector3::new(
            (pixel.x - self.cx) / self.fx,
            (pixel.y - self.cy) / self.fy,
            1.0,
        )
    }

    /// Unit viewing ray through a pixel. The result always has `z > 0`.
    pub fn pixel_to_ray(&self, pixel: &Point2<f64>) -> Result<UnitVector3<f64>, GeometryError> {
        if !self.contains(pixel) {
            return Err(GeometryError::PixelOutOfBounds {
                u: pixel.x,
                v: pixel.y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.ray_unchecked(pixel))
    }

    /// Like [`pixel_to_ray`](Self::pixel_to_ray) without the bounds check.
    pub fn ray_unchecked(&self, pixel: &Point2<f64>) -> UnitVector3<f64> {
        Unit::new_normalize(self.back_project(pixel))
    }

    /// Perspective projection of a camera-frame point. `None` behind the camera.
    pub fn project(&self, point: &Point3<f64>) -> Option<Point2<f64>> {
        if point.z <= 0.0 {
            return None;
        }
        Some(Point2::new(
            self.fx * point.x / point.z + self.cx,
            self.fy * point.y / point.z + self.cy,
        ))
    }

    /// Intrinsics of the half-resolution images obtained by 2x2 subsampling.
    ///
    /// Each output pixel is the 2x2 super-pixel whose center sits at raw
    /// coordinate `2u + 0.5`.
    pub fn halved(&self) -> Result<Self, GeometryError> {
        Self::new(
            self.fx / 2.0,
            self.fy / 2.0,
            (self.cx - 0.5) / 2.0,
            (self.cy - 0.5) / 2.0,
            self.width / 2,
            self.height / 2,
        )
    }
}

/// Free-function form of [`CameraIntrinsics::pixel_to_ray`].
pub fn pixel_to_ray(
    intrinsics: &CameraIntrinsics,
    pixel: &Point2<f64>,
) -> Result<UnitVector3<f64>, GeometryError> {
    intrinsics.pixel_to_ray(pixel)
}

pub fn skew(r: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -r.z, r.y, r.z, 0.0, -r.x, -r.y, r.x, 0.0)
}

/// Rodrigues' formula: `exp(angle * axis^) = I + sin(angle) A + (1 - cos(angle)) A²`.
pub fn rotation_exp(axis: &UnitVector3<f64>, angle: f64) -> Rotation3<f64> {
    let a = skew(axis.as_ref());
    let m = Matrix3::identity() + a * angle.sin() + a * a * (1.0 - angle.cos());
    Rotation3::from_matrix_unchecked(m)
}

pub fn rotation_x(angle: f64) -> Rotation3<f64> {
    rotation_exp(&Vector3::x_axis(), angle)
}

pub fn rotation_y(angle: f64) -> Rotation3<f64> {
    rotation_exp(&Vector3::y_axis(), angle)
}

pub fn rotation_z(angle: f64) -> Rotation3<f64> {
    rotation_exp(&Vector3::z_axis(), angle)
}

/// Rigid camera pose. `rotation` maps world directions into the camera frame,
/// so `n_camera = rotation * n_world`; `center` is the camera position in
/// world coordinates (millimeters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPose", into = "RawPose")]
pub struct Pose {
    rotation: Rotation3<f64>,
    center: Point3<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPose {
    rotation: Vec<f64>,
    center: Vec<f64>,
}

impl TryFrom<RawPose> for Pose {
    type Error = GeometryError;

    fn try_from(raw: RawPose) -> Result<Self, Self::Error> {
        if raw.rotation.len() != 9 {
            return Err(GeometryError::WrongLength {
                field: "rotation",
                expected: 9,
                got: raw.rotation.len(),
            });
        }
        if raw.center.len() != 3 {
            return Err(GeometryError::WrongLength {
                field: "center",
                expected: 3,
                got: raw.center.len(),
            });
        }
        let m = Matrix3::from_row_slice(&raw.rotation);
        Pose::from_matrix(m, Point3::new(raw.center[0], raw.center[1], raw.center[2]))
    }
}

impl From<Pose> for RawPose {
    fn from(p: Pose) -> Self {
        let m = p.rotation.matrix();
        let mut rotation = Vec::with_capacity(9);
        for i in 0..3 {
            for j in 0..3 {
                rotation.push(m[(i, j)]);
            }
        }
        RawPose {
            rotation,
            center: vec![p.center.x, p.center.y, p.center.z],
        }
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            center: Point3::origin(),
        }
    }

    pub fn new(rotation: Rotation3<f64>, center: Point3<f64>) -> Result<Self, GeometryError> {
        Self::from_matrix(*rotation.matrix(), center)
    }

    /// Validates orthonormality and a positive determinant.
    pub fn from_matrix(m: Matrix3<f64>, center: Point3<f64>) -> Result<Self, GeometryError> {
        if !m.iter().all(|x| x.is_finite()) || !center.coords.iter().all(|x| x.is_finite()) {
            return Err(GeometryError::InvalidRotation("non-finite entries".into()));
        }
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        if err > ROTATION_TOLERANCE {
            return Err(GeometryError::InvalidRotation(format!(
                "RᵀR deviates from identity by {err:e}"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeometryError::InvalidRotation(format!(
                "determinant {det} is not +1"
            )));
        }
        Ok(Self {
            rotation: Rotation3::from_matrix_unchecked(m),
            center,
        })
    }

    pub fn rotation(&self) -> &Rotation3<f64> {
        &self.rotation
    }

    pub fn center(&self) -> &Point3<f64> {
        &self.center
    }

    pub fn world_to_camera(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * (p - self.center))
    }

    pub fn camera_to_world(&self, p: &Point3<f64>) -> Point3<f64> {
        self.center + self.rotation.inverse() * p.coords
    }

    /// Rotates a world-frame direction into the camera frame.
    pub fn transform_normal(&self, n_world: &UnitVector3<f64>) -> UnitVector3<f64> {
        Unit::new_normalize(self.rotation * n_world.into_inner())
    }

    /// Rotates a camera-frame direction into the world frame.
    pub fn direction_to_world(&self, d_camera: &UnitVector3<f64>) -> UnitVector3<f64> {
        Unit::new_normalize(self.rotation.inverse() * d_camera.into_inner())
    }
}

/// Free-function form of [`Pose::transform_normal`].
pub fn transform_normal(pose: &Pose, normal_world: &UnitVector3<f64>) -> UnitVector3<f64> {
    pose.transform_normal(normal_world)
}
