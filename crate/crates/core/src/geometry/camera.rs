use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::rotation::{rodrigues, rotation_to_rvec};
use super::{GeometryError, Point2, Point3};

/// Smallest camera-frame depth accepted by [`project`], in mm.
const MIN_DEPTH_MM: f64 = 1e-6;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        let k = CameraIntrinsics { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::InvalidInput(format!(
                "focal lengths must be positive and finite, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }
}

/// Rigid transform from screen coordinates to camera coordinates.
///
/// `rvec` is an axis-angle rotation in radians, `tvec` a translation in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rvec: Vector3<f64>,
    pub tvec: Vector3<f64>,
}

impl Pose {
    pub fn new(rvec: Vector3<f64>, tvec: Vector3<f64>) -> Self {
        Pose { rvec, tvec }
    }

    /// Builds a pose from a rotation matrix, re-deriving the axis-angle
    /// vector so that `‖rvec‖ ≤ π`.
    pub fn from_rotation(rotation: &Matrix3<f64>, tvec: Vector3<f64>) -> Self {
        Pose { rvec: rotation_to_rvec(rotation), tvec }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rodrigues(&self.rvec)
    }

    pub fn transform(&self, p: &Point3) -> Vector3<f64> {
        self.rotation() * p.coords + self.tvec
    }

    /// Camera centre in screen coordinates, `−Rᵀ t`.
    pub fn camera_center(&self) -> Point3 {
        Point3::from(-(self.rotation().transpose() * self.tvec))
    }

    /// Re-express `rvec` with norm in `[0, π]`.
    pub fn normalized(&self) -> Self {
        Pose::from_rotation(&self.rotation(), self.tvec)
    }
}

/// Pinhole projection of a screen-frame point.
pub fn project(k: &CameraIntrinsics, pose: &Pose, p: &Point3) -> Result<Point2, GeometryError> {
    project_camera_point(k, &pose.transform(p))
}

pub(crate) fn project_camera_point(
    k: &CameraIntrinsics,
    pc: &Vector3<f64>,
) -> Result<Point2, GeometryError> {
    if !(pc.z > MIN_DEPTH_MM) {
        return Err(GeometryError::BehindCamera(pc.z));
    }
    Ok(Point2::new(k.fx * pc.x / pc.z + k.cx, k.fy * pc.y / pc.z + k.cy))
}

/// Physical and raster size of the tracked screen.
///
/// Raster pixel `(c, r)` covers the square whose centre lies at
/// `((c + ½)·sx − W/2, (r + ½)·sy − H/2)` mm, where `sx`, `sy` are the
/// per-axis mm-per-pixel scales. The four corner fiducials sit on the centres
/// of the four corner pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenModel {
    pub width_mm: f64,
    pub height_mm: f64,
    pub cols_px: u32,
    pub rows_px: u32,
}

impl Default for ScreenModel {
    fn default() -> Self {
        ScreenModel { width_mm: 400.0, height_mm: 300.0, cols_px: 640, rows_px: 480 }
    }
}

impl ScreenModel {
    pub fn new(
        width_mm: f64,
        height_mm: f64,
        cols_px: u32,
        rows_px: u32,
    ) -> Result<Self, GeometryError> {
        let s = ScreenModel { width_mm, height_mm, cols_px, rows_px };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = self.width_mm.is_finite()
            && self.height_mm.is_finite()
            && self.width_mm > 0.0
            && self.height_mm > 0.0
            && self.cols_px >= 2
            && self.rows_px >= 2;
        if ok {
            Ok(())
        } else {
            Err(GeometryError::InvalidInput(format!("invalid screen model {self:?}")))
        }
    }

    pub fn mm_per_px_x(&self) -> f64 {
        self.width_mm / f64::from(self.cols_px)
    }

    pub fn mm_per_px_y(&self) -> f64 {
        self.height_mm / f64::from(self.rows_px)
    }

    /// Affine map from raster pixel coordinates to screen-plane mm (x, y).
    pub fn px_to_mm_matrix(&self) -> Matrix3<f64> {
        let (sx, sy) = (self.mm_per_px_x(), self.mm_per_px_y());
        Matrix3::new(
            sx,
            0.0,
            0.5 * sx - 0.5 * self.width_mm,
            0.0,
            sy,
            0.5 * sy - 0.5 * self.height_mm,
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn px_to_mm(&self, p: Point2) -> Point3 {
        let (sx, sy) = (self.mm_per_px_x(), self.mm_per_px_y());
        Point3::new((p.x + 0.5) * sx - 0.5 * self.width_mm, (p.y + 0.5) * sy - 0.5 * self.height_mm, 0.0)
    }

    pub fn mm_to_px(&self, x_mm: f64, y_mm: f64) -> Point2 {
        Point2::new(
            (x_mm + 0.5 * self.width_mm) / self.mm_per_px_x() - 0.5,
            (y_mm + 0.5 * self.height_mm) / self.mm_per_px_y() - 0.5,
        )
    }

    /// Corner pixel centres in TL, TR, BR, BL order.
    pub fn canonical_corners_px(&self) -> [Point2; 4] {
        let (c, r) = (f64::from(self.cols_px - 1), f64::from(self.rows_px - 1));
        [Point2::new(0.0, 0.0), Point2::new(c, 0.0), Point2::new(c, r), Point2::new(0.0, r)]
    }

    /// Corner object points on the z = 0 plane in TL, TR, BR, BL order.
    pub fn corner_object_points(&self) -> [Point3; 4] {
        self.canonical_corners_px().map(|p| self.px_to_mm(p))
    }
}
