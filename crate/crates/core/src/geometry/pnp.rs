//! Planar perspective-n-point: homography decomposition for the initial
//! estimate, then Levenberg-Marquardt on the reprojection error.

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Vector3};

use super::camera::project_camera_point;
use super::lm::{levenberg_marquardt, LmConfig};
use super::rotation::{left_jacobian, skew};
use super::{estimate_homography, CameraIntrinsics, GeometryError, Homography, Point2, Point3, Pose};

const PLANE_TOL_MM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnpSolution {
    pub pose: Pose,
    /// Root-mean-square reprojection error at the returned pose, in px.
    pub rms_px: f64,
    /// Accepted refinement steps.
    pub iterations: usize,
}

/// Pose of the z = 0 plane given the homography from plane (x, y) in mm to
/// image pixels.
///
/// `K⁻¹H` is split into `(r1, r2, t)` at the mean of the two column scales,
/// completed with `r3 = r1 × r2` and projected onto the nearest rotation. The
/// sign is chosen so that `centroid` lies in front of the camera.
pub fn planar_pose_from_homography(
    h: &Homography,
    k: &CameraIntrinsics,
    centroid: Point2,
) -> Result<Pose, GeometryError> {
    let m = k.inverse_matrix() * h.matrix();
    let (h1, h2, h3) = (m.column(0).into_owned(), m.column(1).into_owned(), m.column(2).into_owned());
    let (n1, n2) = (h1.norm(), h2.norm());
    if !(n1 > 0.0 && n2 > 0.0) {
        return Err(GeometryError::DegenerateConfiguration("homography has a null column".into()));
    }
    let mut scale = 0.5 * (1.0 / n1 + 1.0 / n2);
    let depth = scale * (h1 * centroid.x + h2 * centroid.y + h3).z;
    if depth < 0.0 {
        scale = -scale;
    }
    let r1 = h1 * scale;
    let r2 = h2 * scale;
    let t = h3 * scale;
    let r3 = r1.cross(&r2);
    let raw = Matrix3::from_columns(&[r1, r2, r3]);
    Ok(Pose::from_rotation(&nearest_rotation(&raw), t))
}

/// Orthogonal polar factor with determinant +1.
fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        let mut min_i = 0;
        for i in 1..3 {
            if svd.singular_values[i] < svd.singular_values[min_i] {
                min_i = i;
            }
        }
        u.column_mut(min_i).neg_mut();
        r = u * v_t;
    }
    r
}

fn pose_from_params(x: &DVector<f64>) -> Pose {
    Pose::new(Vector3::new(x[0], x[1], x[2]), Vector3::new(x[3], x[4], x[5]))
}

/// Stacked `(u − u_obs, v − v_obs)` residuals; NaN for points behind the camera.
fn reprojection_residuals(
    k: &CameraIntrinsics,
    pose: &Pose,
    object: &[Point3],
    image: &[Point2],
) -> DVector<f64> {
    let r = pose.rotation();
    let mut out = DVector::zeros(2 * object.len());
    for (i, (p, obs)) in object.iter().zip(image).enumerate() {
        match project_camera_point(k, &(r * p.coords + pose.tvec)) {
            Ok(q) => {
                out[2 * i] = q.x - obs.x;
                out[2 * i + 1] = q.y - obs.y;
            }
            Err(_) => {
                out[2 * i] = f64::NAN;
                out[2 * i + 1] = f64::NAN;
            }
        }
    }
    out
}

/// Analytic Jacobian of the projections with respect to `(rvec, tvec)`,
/// shape `2n × 6`.
pub fn reprojection_jacobian(k: &CameraIntrinsics, pose: &Pose, object: &[Point3]) -> DMatrix<f64> {
    let r = pose.rotation();
    let jl = left_jacobian(&pose.rvec);
    let mut jac = DMatrix::zeros(2 * object.len(), 6);
    for (i, p) in object.iter().enumerate() {
        let rp = r * p.coords;
        let pc = rp + pose.tvec;
        let inv_z = 1.0 / pc.z;
        let d_proj = Matrix2x3::new(
            k.fx * inv_z,
            0.0,
            -k.fx * pc.x * inv_z * inv_z,
            0.0,
            k.fy * inv_z,
            -k.fy * pc.y * inv_z * inv_z,
        );
        let d_rot = d_proj * (-skew(&rp) * jl);
        jac.view_mut((2 * i, 0), (2, 3)).copy_from(&d_rot);
        jac.view_mut((2 * i, 3), (2, 3)).copy_from(&d_proj);
    }
    jac
}

/// Camera pose from four or more coplanar (z = 0) object points and their
/// image projections.
pub fn solve_pnp(
    object: &[Point3],
    image: &[Point2],
    k: &CameraIntrinsics,
    cfg: &LmConfig,
) -> Result<PnpSolution, GeometryError> {
    if object.len() != image.len() {
        return Err(GeometryError::InvalidInput(format!(
            "{} object points vs {} image points",
            object.len(),
            image.len()
        )));
    }
    if object.len() < 4 {
        return Err(GeometryError::InsufficientPoints(object.len()));
    }
    if object.iter().any(|p| !(p.z.abs() <= PLANE_TOL_MM) || !p.x.is_finite() || !p.y.is_finite()) {
        return Err(GeometryError::DegenerateConfiguration(
            "object points must lie on the plane z = 0".into(),
        ));
    }
    k.validate()?;

    let plane: Vec<Point2> = object.iter().map(|p| Point2::new(p.x, p.y)).collect();
    let h = estimate_homography(&plane, image)?;
    let n = plane.len() as f64;
    let centroid = Point2::new(
        plane.iter().map(|p| p.x).sum::<f64>() / n,
        plane.iter().map(|p| p.y).sum::<f64>() / n,
    );
    let init = planar_pose_from_homography(&h, k, centroid)?;

    let x0 = DVector::from_vec(vec![
        init.rvec.x, init.rvec.y, init.rvec.z, init.tvec.x, init.tvec.y, init.tvec.z,
    ]);
    let report = levenberg_marquardt(
        |x| reprojection_residuals(k, &pose_from_params(x), object, image),
        |x| reprojection_jacobian(k, &pose_from_params(x), object),
        x0,
        cfg,
    )
    .map_err(|e| match e {
        GeometryError::Stalled(_) | GeometryError::InvalidStart => GeometryError::PoseFailure(e.to_string()),
        other => other,
    })?;

    let pose = pose_from_params(&report.x).normalized();
    let rms_px = (2.0 * report.cost / (2.0 * n)).sqrt();
    if !rms_px.is_finite() {
        return Err(GeometryError::PoseFailure("non-finite reprojection error".into()));
    }
    Ok(PnpSolution { pose, rms_px, iterations: report.iterations })
}

/// Distance from the screen centre to the camera centre (mm) and the
/// unsigned off-screen angle (degrees) between the viewer-facing screen
/// normal `(0, 0, −1)` and the ray from the screen centre to the camera.
pub fn pose_to_distance_angle(pose: &Pose) -> (f64, f64) {
    let c = pose.camera_center();
    let distance = c.coords.norm();
    let lateral = (c.x * c.x + c.y * c.y).sqrt();
    let angle = lateral.atan2(-c.z).to_degrees();
    (distance, angle)
}

/// Off-screen angle carrying the sign of the camera's horizontal offset.
pub fn signed_off_angle_deg(pose: &Pose) -> f64 {
    let (_, angle) = pose_to_distance_angle(pose);
    if pose.camera_center().x < 0.0 {
        -angle
    } else {
        angle
    }
}
