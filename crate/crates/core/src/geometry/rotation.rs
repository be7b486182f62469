//! Axis-angle <-> rotation matrix conversions.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `sin θ / θ`, `(1 − cos θ) / θ²` and `(θ − sin θ) / θ³`, with series
/// expansions near zero.
fn rodrigues_coefficients(theta: f64) -> (f64, f64, f64) {
    if theta < 1e-4 {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let t2 = theta * theta;
        (theta.sin() / theta, (1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
    }
}

/// Rotation matrix of an axis-angle vector (Rodrigues formula).
pub fn rodrigues(rvec: &Vector3<f64>) -> Matrix3<f64> {
    let (a, b, _) = rodrigues_coefficients(rvec.norm());
    let k = skew(rvec);
    Matrix3::identity() + k * a + k * k * b
}

/// Left Jacobian of SO(3): `R(r + δ) ≈ Exp(J(r)·δ)·R(r)`.
pub(crate) fn left_jacobian(rvec: &Vector3<f64>) -> Matrix3<f64> {
    let (_, b, c) = rodrigues_coefficients(rvec.norm());
    let k = skew(rvec);
    Matrix3::identity() + k * b + k * k * c
}

/// Axis-angle vector of a rotation matrix, with `‖rvec‖ ∈ [0, π]`.
///
/// Goes through a unit quaternion so that angles near 0 and near π are both
/// well conditioned.
pub fn rotation_to_rvec(r: &Matrix3<f64>) -> Vector3<f64> {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    q.scaled_axis()
}
