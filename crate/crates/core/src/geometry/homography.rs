use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::linalg::solve_homogeneous;
use super::{ensure_finite2, GeometryError, Point2};

/// Magnitude of the bottom-right entry above which it is used as the scale.
const SCALE_ENTRY_TOL: f64 = 1e-9;
/// Smallest |det| of a canonical matrix still considered invertible.
const DET_TOL: f64 = 1e-12;
/// Smallest |w| accepted when dehomogenising.
const W_TOL: f64 = 1e-12;
/// Triangle area threshold, relative to the squared bounding-box diagonal.
const COLLINEAR_TOL: f64 = 1e-9;

/// Invertible 3x3 projective transform, always stored in canonical form.
///
/// The canonical form has `m[(2, 2)] == 1` whenever that entry is larger
/// than 1e-9 in magnitude; otherwise the matrix has unit Frobenius norm and
/// its first nonzero entry is positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 9]", into = "[f64; 9]")]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Homography { m: Matrix3::identity() }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography { m: Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0) }
    }

    pub fn scaling(sx: f64, sy: f64) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix3::new(sx, 0.0, 0.0, 0.0, sy, 0.0, 0.0, 0.0, 1.0))
    }

    /// Canonicalise an arbitrary-scale matrix.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidInput("non-finite homography entry".into()));
        }
        let m = canonicalize(m).ok_or(GeometryError::SingularTransform)?;
        if m.determinant().abs() <= DET_TOL {
            return Err(GeometryError::SingularTransform);
        }
        Ok(Homography { m })
    }

    pub fn from_row_major(values: [f64; 9]) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix3::from_row_slice(&values))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    /// Canonical form of `H⁻¹`.
    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let inv = self.m.try_inverse().ok_or(GeometryError::SingularTransform)?;
        Self::from_matrix(inv)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Self, GeometryError> {
        Self::from_matrix(self.m * other.m)
    }

    pub fn apply(&self, p: Point2) -> Result<Point2, GeometryError> {
        let m = &self.m;
        let w = m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)];
        if !(w.abs() > W_TOL) {
            return Err(GeometryError::PointAtInfinity);
        }
        Ok(Point2::new(
            (m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)]) / w,
            (m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)]) / w,
        ))
    }

    /// Frobenius distance between canonical forms.
    pub fn distance(&self, other: &Homography) -> f64 {
        (self.m - other.m).norm()
    }
}

impl From<Homography> for [f64; 9] {
    fn from(h: Homography) -> Self {
        h.to_row_major()
    }
}

impl TryFrom<[f64; 9]> for Homography {
    type Error = GeometryError;

    fn try_from(values: [f64; 9]) -> Result<Self, Self::Error> {
        Homography::from_row_major(values)
    }
}

fn canonicalize(m: Matrix3<f64>) -> Option<Matrix3<f64>> {
    let h22 = m[(2, 2)];
    if h22.abs() > SCALE_ENTRY_TOL {
        return Some(m / h22);
    }
    let norm = m.norm();
    if norm == 0.0 {
        return None;
    }
    let mut out = m / norm;
    // row-major scan for the first nonzero entry
    let first = (0..3)
        .flat_map(|r| (0..3).map(move |c| (r, c)))
        .map(|rc| out[rc])
        .find(|v| *v != 0.0)?;
    if first < 0.0 {
        out = -out;
    }
    Some(out)
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn normalizing_transform(points: &[Point2]) -> Result<Matrix3<f64>, GeometryError> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = points
        .iter()
        .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if !(mean_dist > 0.0) {
        return Err(GeometryError::DegenerateConfiguration("all points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn check_no_three_collinear(points: &[Point2], which: &str) -> Result<(), GeometryError> {
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
    }
    let bbox_sq = (max_x - min_x).powi(2) + (max_y - min_y).powi(2);
    let threshold = COLLINEAR_TOL * bbox_sq;
    let n = points.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (a, b, c) = (points[i], points[j], points[k]);
                let area = 0.5 * ((b - a).perp(&(c - a))).abs();
                if !(area > threshold) {
                    return Err(GeometryError::DegenerateConfiguration(format!(
                        "{which} points {i}, {j}, {k} are collinear"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Normalised DLT estimate of the homography mapping `src` onto `dst`.
pub fn estimate_homography(src: &[Point2], dst: &[Point2]) -> Result<Homography, GeometryError> {
    if src.len() != dst.len() {
        return Err(GeometryError::InvalidInput(format!(
            "correspondence count mismatch: {} source vs {} destination points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 4 {
        return Err(GeometryError::InsufficientPoints(src.len()));
    }
    ensure_finite2(src)?;
    ensure_finite2(dst)?;
    check_no_three_collinear(src, "source")?;
    check_no_three_collinear(dst, "destination")?;

    let t_src = normalizing_transform(src)?;
    let t_dst = normalizing_transform(dst)?;

    let mut a = DMatrix::zeros(2 * src.len(), 9);
    for (i, (s, d)) in src.iter().zip(dst).enumerate() {
        let s = t_src * Vector3::new(s.x, s.y, 1.0);
        let d = t_dst * Vector3::new(d.x, d.y, 1.0);
        let (x, y) = (s.x, s.y);
        let (u, v) = (d.x, d.y);
        a.row_mut(2 * i)
            .copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(2 * i + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let h = solve_homogeneous(&a)?;
    let h_norm = Matrix3::from_row_slice(h.as_slice());
    let t_dst_inv = t_dst.try_inverse().ok_or(GeometryError::SingularTransform)?;
    Homography::from_matrix(t_dst_inv * h_norm * t_src)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> Vec<Point2> {
        vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ]
    }

    fn random_homography(rng: &mut ChaCha8Rng) -> Homography {
        let mut m = Matrix3::identity();
        for v in m.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
        Homography::from_matrix(m).unwrap()
    }

    fn map_all(h: &Homography, pts: &[Point2]) -> Vec<Point2> {
        pts.iter().map(|p| h.apply(*p).unwrap()).collect()
    }

    #[test]
    fn fixed_points_give_identity() {
        let sq = unit_square();
        let h = estimate_homography(&sq, &sq).unwrap();
        assert!(h.distance(&Homography::identity()) < 1e-12);
    }

    #[test]
    fn pure_translation() {
        let sq = unit_square();
        let moved: Vec<_> = sq.iter().map(|p| Point2::new(p.x + 5.0, p.y + 7.0)).collect();
        let h = estimate_homography(&sq, &moved).unwrap();
        assert!(h.distance(&Homography::translation(5.0, 7.0)) < 1e-12);
    }

    #[test]
    fn recovers_random_homographies() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sq = unit_square();
        for _ in 0..200 {
            let truth = random_homography(&mut rng);
            let Ok(dst) = sq.iter().map(|p| truth.apply(*p)).collect::<Result<Vec<_>, _>>()
            else {
                continue;
            };
            if check_no_three_collinear(&dst, "dst").is_err() {
                continue;
            }
            let est = estimate_homography(&sq, &dst).unwrap();
            assert!(est.distance(&truth) < 1e-8, "error {}", est.distance(&truth));
        }
    }

    #[test]
    fn reproduces_exact_correspondences() {
        let src = vec![
            Point2::new(0.0, 0.0),
            Point2::new(639.0, 0.0),
            Point2::new(639.0, 479.0),
            Point2::new(0.0, 479.0),
        ];
        let dst = vec![
            Point2::new(412.3, 201.7),
            Point2::new(801.9, 188.2),
            Point2::new(822.4, 512.6),
            Point2::new(398.1, 497.0),
        ];
        let h = estimate_homography(&src, &dst).unwrap();
        for (s, d) in src.iter().zip(&dst) {
            let p = h.apply(*s).unwrap();
            assert!((p - d).norm() <= 1e-8 * d.coords.norm());
        }
    }

    #[test]
    fn invariant_to_source_prescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sq = unit_square();
        let truth = random_homography(&mut rng);
        let dst = map_all(&truth, &sq);
        let scaled: Vec<_> = sq.iter().map(|p| Point2::new(p.x * 1000.0, p.y * 1000.0)).collect();
        let est = estimate_homography(&scaled, &dst).unwrap();
        for (s, d) in scaled.iter().zip(&dst) {
            assert!((est.apply(*s).unwrap() - d).norm() < 1e-6);
        }
    }

    #[test]
    fn degenerate_inputs() {
        let sq = unit_square();
        assert_eq!(
            estimate_homography(&sq[..3], &sq[..3]),
            Err(GeometryError::InsufficientPoints(3))
        );
        let line: Vec<_> = (0..4).map(|i| Point2::new(i as f64, 2.0 * i as f64)).collect();
        assert!(matches!(
            estimate_homography(&line, &sq),
            Err(GeometryError::DegenerateConfiguration(_))
        ));
        let mut three_collinear = sq.clone();
        three_collinear[2] = Point2::new(2.0, 0.0);
        assert!(matches!(
            estimate_homography(&sq, &three_collinear),
            Err(GeometryError::DegenerateConfiguration(_))
        ));
        assert!(matches!(
            estimate_homography(&sq, &sq[..3]),
            Err(GeometryError::InvalidInput(_))
        ));
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(Homography::identity().inverse().unwrap(), Homography::identity());
        let inv = Homography::translation(5.0, 7.0).inverse().unwrap();
        assert!(inv.distance(&Homography::translation(-5.0, -7.0)) < 1e-15);
        let singular = Matrix3::new(1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 1.0);
        assert_eq!(Homography::from_matrix(singular), Err(GeometryError::SingularTransform));
    }

    #[test]
    fn apply_examples() {
        let p = Point2::new(3.0, 4.0);
        assert_eq!(Homography::identity().apply(p).unwrap(), p);
        assert_eq!(Homography::scaling(2.0, 2.0).unwrap().apply(p).unwrap(), Point2::new(6.0, 8.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let h = random_homography(&mut rng);
            let m = h.to_row_major();
            let (x, y) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let hx = m[0] * x + m[1] * y + m[2];
            let hy = m[3] * x + m[4] * y + m[5];
            let hw = m[6] * x + m[7] * y + m[8];
            if hw.abs() < 1e-6 {
                continue;
            }
            let q = h.apply(Point2::new(x, y)).unwrap();
            assert!((q.x - hx / hw).abs() < 1e-12 && (q.y - hy / hw).abs() < 1e-12);
        }
    }

    #[test]
    fn point_at_infinity() {
        let h = Homography::from_matrix(Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0))
            .unwrap();
        assert_eq!(h.apply(Point2::new(-1.0, 3.0)), Err(GeometryError::PointAtInfinity));
    }

    #[test]
    fn canonical_form_fallback() {
        // bottom-right entry zero: unit norm, first nonzero entry positive
        let m = Matrix3::new(0.0, -2.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(Homography::from_matrix(m), Err(GeometryError::SingularTransform));
        let m = Matrix3::new(0.0, -2.0, 1.0, 2.0, 0.0, 0.0, 3.0, 1.0, 0.0);
        let h = Homography::from_matrix(m).unwrap();
        assert!((h.matrix().norm() - 1.0).abs() < 1e-15);
        assert!(h.matrix()[(0, 1)] > 0.0);
        assert_eq!(Homography::from_matrix(-m).unwrap(), h);
    }

    #[test]
    fn json_is_row_major_array() {
        let h = Homography::translation(5.0, 7.0);
        let s = serde_json::to_string(&h).unwrap();
        assert_eq!(s, "[1.0,0.0,5.0,0.0,1.0,7.0,0.0,0.0,1.0]");
        let back: Homography = serde_json::from_str(&s).unwrap();
        assert_eq!(back, h);
        assert!(serde_json::from_str::<Homography>("[0,0,0,0,0,0,0,0,0]").is_err());
    }

    proptest! {
        #[test]
        fn compose_with_inverse_is_identity(entries in proptest::array::uniform9(-0.3f64..0.3)) {
            let mut m = Matrix3::identity();
            for (v, e) in m.iter_mut().zip(entries) {
                *v += e;
            }
            let h = Homography::from_matrix(m).unwrap();
            prop_assume!(h.matrix().norm() * h.inverse().unwrap().matrix().norm() < 100.0);
            let id = h.compose(&h.inverse().unwrap()).unwrap();
            prop_assert!(id.distance(&Homography::identity()) < 1e-9);
        }
    }
}
