//! Projective and rigid geometry: homogeneous least squares, homography
//! estimation, pinhole projection and planar pose recovery.
//!
//! Screen coordinates are millimetres with the origin at the screen centre,
//! x to the right, y down and the screen lying in the plane z = 0. The viewer
//! sits on the negative-z side. Camera coordinates follow the usual computer
//! vision convention (x right, y down, z along the optical axis).

mod camera;
mod homography;
mod linalg;
mod lm;
mod pnp;
mod rotation;

use thiserror::Error;

pub use camera::{project, CameraIntrinsics, Pose, ScreenModel};
pub use homography::{estimate_homography, Homography};
pub use linalg::solve_homogeneous;
pub use lm::{levenberg_marquardt, numeric_jacobian, LmConfig, LmReport, Termination};
pub use pnp::{
    planar_pose_from_homography, pose_to_distance_angle, reprojection_jacobian,
    signed_off_angle_deg, solve_pnp, PnpSolution,
};
pub use rotation::{rodrigues, rotation_to_rvec};

pub type Point2 = nalgebra::Point2<f64>;
pub type Point3 = nalgebra::Point3<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("null space is not one-dimensional: the two smallest singular values coincide")]
    AmbiguousKernel,
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("at least 4 correspondences are required, got {0}")]
    InsufficientPoints(usize),
    #[error("transform is singular")]
    SingularTransform,
    #[error("point maps to infinity")]
    PointAtInfinity,
    #[error("point lies behind the camera (z = {0} mm)")]
    BehindCamera(f64),
    #[error("residuals are not finite at the starting point")]
    InvalidStart,
    #[error("normal equations could not be solved (lambda = {0:e})")]
    Stalled(f64),
    #[error("pose estimation failed: {0}")]
    PoseFailure(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub(crate) fn ensure_finite2(points: &[Point2]) -> Result<(), GeometryError> {
    if points.iter().all(|p| p.x.is_finite() && p.y.is_finite()) {
        Ok(())
    } else {
        Err(GeometryError::InvalidInput("non-finite point coordinate".into()))
    }
}
