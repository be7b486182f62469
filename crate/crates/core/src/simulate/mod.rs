//! Synthetic scene renderer used as ground truth for end-to-end checks.
//!
//! A screen image is placed on the z = 0 plane, viewed through a pinhole
//! camera, decorated with the four corner markers and optionally degraded
//! by a reflection band and pixel noise.

mod screen;

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{CornerId, MarkerSpec};
use crate::geometry::{
    pose_to_distance_angle, project, signed_off_angle_deg, CameraIntrinsics, GeometryError, Homography, Point2,
    Pose, ScreenModel,
};
use crate::image::Image;
use crate::rectify::{warp_perspective, WarpConfig};

pub use screen::{frustum_contains, synthetic_screen};

const MAX_SUPERSAMPLE: u32 = 16;
const MARKER_SUBSAMPLES: u32 = 8;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("off-screen angle {0} deg must satisfy |angle| < 90")]
    InvalidAngle(f64),
    #[error("viewing distance {0} mm must be positive")]
    InvalidDistance(f64),
    #[error("screen image is {found:?} but the screen raster is {expected:?}")]
    DimensionMismatch { expected: (u32, u32), found: (u32, u32) },
    #[error("invalid scene: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("ground truth parse error: {0}")]
    Parse(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub screen: ScreenModel,
    pub k: CameraIntrinsics,
    pub frame_cols: u32,
    pub frame_rows: u32,
    /// Side of each square marker on the screen plane.
    pub marker_size_mm: f64,
    /// Standard deviation of the additive noise in 8-bit levels.
    pub noise_sigma: f64,
    pub occlude: BTreeSet<CornerId>,
    pub background: u8,
    /// Peak opacity of the reflection band, 0 disables it.
    pub reflection: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            screen: ScreenModel::default(),
            k: CameraIntrinsics { fx: 900.0, fy: 900.0, cx: 640.0, cy: 360.0 },
            frame_cols: 1280,
            frame_rows: 720,
            marker_size_mm: 30.0,
            noise_sigma: 0.0,
            occlude: BTreeSet::new(),
            background: 64,
            reflection: 0.0,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SimulateError> {
        self.screen.validate()?;
        self.k.validate()?;
        if self.frame_cols == 0 || self.frame_rows == 0 {
            return Err(SimulateError::InvalidConfig("frame dimensions must be positive".into()));
        }
        // markers are centred on the corners, so half of each square lies on
        // the screen and half on the bezel
        let limit = 0.5 * self.screen.width_mm.min(self.screen.height_mm);
        if !(self.marker_size_mm > 0.0 && self.marker_size_mm <= limit) {
            return Err(SimulateError::InvalidConfig(format!(
                "marker size {} mm must lie in (0, {limit}]",
                self.marker_size_mm
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(SimulateError::InvalidConfig(format!("noise sigma {} must be >= 0", self.noise_sigma)));
        }
        if !(0.0..=1.0).contains(&self.reflection) {
            return Err(SimulateError::InvalidConfig(format!(
                "reflection opacity {} outside [0, 1]",
                self.reflection
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub pose: Pose,
    /// Screen pixels to frame pixels.
    pub h_true: Homography,
    /// Projected marker centres, TL, TR, BR, BL.
    pub corners_px: [Point2; 4],
    pub distance_mm: f64,
    pub off_angle_deg: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireCorners {
    #[serde(rename = "TL")]
    tl: [f64; 2],
    #[serde(rename = "TR")]
    tr: [f64; 2],
    #[serde(rename = "BR")]
    br: [f64; 2],
    #[serde(rename = "BL")]
    bl: [f64; 2],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireTruth {
    pose: Pose,
    #[serde(rename = "H")]
    h: [f64; 9],
    corners: WireCorners,
    distance_mm: f64,
    angle_deg: f64,
}

impl GroundTruth {
    pub fn signed_off_angle_deg(&self) -> f64 {
        signed_off_angle_deg(&self.pose)
    }

    pub fn to_json(&self) -> String {
        let c = self.corners_px.map(|p| [p.x, p.y]);
        let wire = WireTruth {
            pose: self.pose,
            h: self.h_true.to_row_major(),
            corners: WireCorners { tl: c[0], tr: c[1], br: c[2], bl: c[3] },
            distance_mm: self.distance_mm,
            angle_deg: self.off_angle_deg,
        };
        serde_json::to_string_pretty(&wire).expect("ground truth serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, SimulateError> {
        let w: WireTruth = serde_json::from_str(text).map_err(|e| SimulateError::Parse(e.to_string()))?;
        let h_true = Homography::from_row_major(w.h)?;
        let c = [w.corners.tl, w.corners.tr, w.corners.br, w.corners.bl].map(|[x, y]| Point2::new(x, y));
        Ok(GroundTruth { pose: w.pose, h_true, corners_px: c, distance_mm: w.distance_mm, off_angle_deg: w.angle_deg })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), SimulateError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n")
            .map_err(|source| SimulateError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimulateError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| SimulateError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }
}

/// Camera pose at `distance_mm` from the screen centre, swung by
/// `off_angle_deg` in the horizontal plane (positive towards +x) and looking
/// at the screen centre with the image y axis pointing down the screen, then
/// rolled by `roll_deg` about the optical axis.
pub fn sample_pose(distance_mm: f64, off_angle_deg: f64, roll_deg: f64) -> Result<Pose, SimulateError> {
    if !(distance_mm > 0.0 && distance_mm.is_finite()) {
        return Err(SimulateError::InvalidDistance(distance_mm));
    }
    if !(off_angle_deg.abs() < 90.0) {
        return Err(SimulateError::InvalidAngle(off_angle_deg));
    }
    if !roll_deg.is_finite() {
        return Err(SimulateError::InvalidConfig(format!("roll {roll_deg} is not finite")));
    }
    let theta = off_angle_deg.to_radians();
    let center = Vector3::new(theta.sin(), 0.0, -theta.cos()) * distance_mm;
    let forward = -center.normalize();
    let up = Vector3::new(0.0, -1.0, 0.0);
    let x_cam = forward.cross(&up).normalize();
    let y_cam = forward.cross(&x_cam);
    let look = Matrix3::from_rows(&[x_cam.transpose(), y_cam.transpose(), forward.transpose()]);
    let (s, c) = roll_deg.to_radians().sin_cos();
    let roll = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    let r = roll * look;
    let t = -(r * center);
    Ok(Pose::from_rotation(&r, t))
}

/// Homography from screen-plane mm (x, y) to frame pixels.
fn plane_homography(k: &CameraIntrinsics, pose: &Pose) -> Result<Homography, GeometryError> {
    let r = pose.rotation();
    let mut m = Matrix3::zeros();
    m.set_column(0, &r.column(0));
    m.set_column(1, &r.column(1));
    m.set_column(2, &pose.tvec);
    Homography::from_matrix(k.matrix() * m)
}

/// Frame rectangle `[x0, x1) × [y0, y1)` covering `pts`, clipped to the
/// frame; `None` when empty.
fn pixel_bounds(pts: &[Point2], cols: u32, rows: u32) -> Option<(u32, u32, u32, u32)> {
    let min_x = pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let max_x = pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let max_y = pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    // pixel u covers [u - 0.5, u + 0.5)
    let x0 = (min_x + 0.5).floor().max(0.0);
    let y0 = (min_y + 0.5).floor().max(0.0);
    let x1 = (max_x + 0.5).ceil().min(f64::from(cols));
    let y1 = (max_y + 0.5).ceil().min(f64::from(rows));
    if x0 >= x1 || y0 >= y1 {
        return None;
    }
    Some((x0 as u32, y0 as u32, x1 as u32, y1 as u32))
}

/// Per-axis supersampling factors: screen pixels spanned by one frame pixel
/// step, maximised over the quad corners.
fn supersample_factors(frame_to_screen: &Homography, quad: &[Point2; 4]) -> (u32, u32) {
    let step = |p: Point2, dx: f64, dy: f64| -> f64 {
        match (frame_to_screen.apply(p), frame_to_screen.apply(Point2::new(p.x + dx, p.y + dy))) {
            (Ok(a), Ok(b)) => (b - a).norm(),
            _ => f64::from(MAX_SUPERSAMPLE),
        }
    };
    let fu = quad.iter().map(|&p| step(p, 1.0, 0.0)).fold(1.0, f64::max);
    let fv = quad.iter().map(|&p| step(p, 0.0, 1.0)).fold(1.0, f64::max);
    let clamp = |f: f64| (f.ceil() as u32).clamp(1, MAX_SUPERSAMPLE);
    (clamp(fu), clamp(fv))
}

/// Warps the screen content into `frame`, area-averaging over a supersampled
/// grid restricted to the screen's footprint.
fn paint_screen(frame: &mut Image, screen_rgb: &Image, h_true: &Homography, background: u8) -> Result<(), SimulateError> {
    let (w, h) = (f64::from(screen_rgb.width()), f64::from(screen_rgb.height()));
    let outline = [Point2::new(-0.5, -0.5), Point2::new(w - 0.5, -0.5), Point2::new(w - 0.5, h - 0.5), Point2::new(-0.5, h - 0.5)];
    let mut quad = [Point2::origin(); 4];
    for (q, p) in quad.iter_mut().zip(outline) {
        *q = h_true.apply(p)?;
    }
    let Some((x0, y0, x1, y1)) = pixel_bounds(&quad, frame.width(), frame.height()) else {
        return Ok(());
    };
    let inverse = h_true.inverse()?;
    let (fu, fv) = supersample_factors(&inverse, &quad);

    // grid sample (i, j) sits at frame (x0 + (i + ½)/fu − ½, y0 + (j + ½)/fv − ½)
    let (su, sv) = (f64::from(fu), f64::from(fv));
    let grid_to_frame = Homography::from_matrix(Matrix3::new(
        1.0 / su,
        0.0,
        f64::from(x0) + 0.5 / su - 0.5,
        0.0,
        1.0 / sv,
        f64::from(y0) + 0.5 / sv - 0.5,
        0.0,
        0.0,
        1.0,
    ))?;
    let grid_to_screen = inverse.compose(&grid_to_frame)?;
    let cfg = WarpConfig { out_cols: (x1 - x0) * fu, out_rows: (y1 - y0) * fv, fill: background };
    let fine = warp_perspective(screen_rgb, &grid_to_screen, &cfg)
        .map_err(|e| SimulateError::InvalidConfig(e.to_string()))?;

    let n = fu * fv;
    let fine_cols = cfg.out_cols as usize;
    let data = fine.data();
    for y in y0..y1 {
        for x in x0..x1 {
            let mut acc = [0u32; 3];
            for j in 0..fv {
                let row = ((y - y0) * fv + j) as usize;
                for i in 0..fu {
                    let col = ((x - x0) * fu + i) as usize;
                    let o = (row * fine_cols + col) * 3;
                    for c in 0..3 {
                        acc[c] += u32::from(data[o + c]);
                    }
                }
            }
            let px = frame.pixel_mut(x, y);
            for c in 0..3 {
                px[c] = ((acc[c] + n / 2) / n) as u8;
            }
        }
    }
    Ok(())
}

/// Paints an axis-aligned square of the screen plane with colour `rgb`,
/// blending each pixel by its covered area.
fn paint_marker(
    frame: &mut Image,
    plane_to_frame: &Homography,
    frame_to_plane: &Homography,
    center_mm: (f64, f64),
    size_mm: f64,
    rgb: [u8; 3],
) -> Result<(), SimulateError> {
    let half = 0.5 * size_mm;
    let (cx, cy) = center_mm;
    let mut quad = [Point2::origin(); 4];
    for (q, (dx, dy)) in quad.iter_mut().zip([(-half, -half), (half, -half), (half, half), (-half, half)]) {
        *q = plane_to_frame.apply(Point2::new(cx + dx, cy + dy))?;
    }
    let Some((x0, y0, x1, y1)) = pixel_bounds(&quad, frame.width(), frame.height()) else {
        return Ok(());
    };
    let s = MARKER_SUBSAMPLES;
    let step = 1.0 / f64::from(s);
    let total = f64::from(s * s);
    let inside_square = |u: f64, v: f64| {
        frame_to_plane
            .apply(Point2::new(u, v))
            .is_ok_and(|p| (p.x - cx).abs() <= half && (p.y - cy).abs() <= half)
    };
    for y in y0..y1 {
        for x in x0..x1 {
            let (xf, yf) = (f64::from(x), f64::from(y));
            // the projected square is convex: four covered pixel corners
            // mean a fully covered pixel
            let full = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
                .iter()
                .all(|&(dx, dy)| inside_square(xf + dx, yf + dy));
            if full {
                frame.pixel_mut(x, y).copy_from_slice(&rgb);
                continue;
            }
            let mut inside = 0u32;
            for j in 0..s {
                let v = f64::from(y) - 0.5 + (f64::from(j) + 0.5) * step;
                for i in 0..s {
                    let u = f64::from(x) - 0.5 + (f64::from(i) + 0.5) * step;
                    inside += u32::from(inside_square(u, v));
                }
            }
            if inside == 0 {
                continue;
            }
            let alpha = f64::from(inside) / total;
            let px = frame.pixel_mut(x, y);
            for c in 0..3 {
                let v = f64::from(px[c]) * (1.0 - alpha) + f64::from(rgb[c]) * alpha;
                px[c] = (v + 0.5) as u8;
            }
        }
    }
    Ok(())
}

/// Vertical bright band right of the frame centre. Its opacity grows with the
/// signed viewing angle so that one side of the sweep is affected more.
fn paint_reflection(frame: &mut Image, opacity: f64, signed_angle_deg: f64) {
    let side = 0.5 * (1.0 + signed_angle_deg.to_radians().sin());
    let peak = opacity * side;
    if peak <= 0.0 {
        return;
    }
    let cols = f64::from(frame.width());
    let (center, width) = (0.62 * cols, 0.1 * cols);
    let alphas: Vec<f64> = (0..frame.width())
        .map(|u| {
            let d = (f64::from(u) - center) / width;
            peak * (-d * d).exp()
        })
        .collect();
    let w = frame.width() as usize;
    for row in frame.data_mut().chunks_exact_mut(w * 3) {
        for (px, &a) in row.chunks_exact_mut(3).zip(&alphas) {
            for v in px {
                *v = (f64::from(*v) + a * (255.0 - f64::from(*v)) + 0.5) as u8;
            }
        }
    }
}

/// Sampler for `round(N(0, σ²))` on the offsets `-k..=k` driven by one
/// 32-bit uniform. Adding a Gaussian to an integer level and rounding only
/// depends on this integer part, so the discrete law is sampled directly.
struct RoundedGaussian {
    k: i32,
    /// `thresholds[i]`: upper quantile bound of offset `i - k`, in units of 2^-32.
    thresholds: Vec<u64>,
    /// First candidate offset index for each value of the top 16 bits.
    start: Vec<u16>,
}

impl RoundedGaussian {
    fn new(sigma: f64) -> Self {
        let k = (8.0 * sigma).ceil() as i32 + 1;
        let phi = |x: f64| 0.5 * libm::erfc(-x / (sigma * std::f64::consts::SQRT_2));
        let scale = 2f64.powi(32);
        let thresholds: Vec<u64> = (-k..=k)
            .map(|i| if i == k { 1 << 32 } else { (phi(f64::from(i) + 0.5) * scale).round() as u64 })
            .collect();
        let start = (0u64..1 << 16)
            .map(|b| thresholds.partition_point(|&t| t <= b << 16) as u16)
            .collect();
        RoundedGaussian { k, thresholds, start }
    }

    #[inline]
    fn offset(&self, u: u32) -> i32 {
        let u = u64::from(u);
        let mut i = usize::from(self.start[(u >> 16) as usize]);
        while self.thresholds[i] <= u {
            i += 1;
        }
        i as i32 - self.k
    }
}

fn add_noise(frame: &mut Image, sigma: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let law = RoundedGaussian::new(sigma);
    for v in frame.data_mut() {
        let offset = law.offset(rng.random::<u32>());
        *v = (i32::from(*v) + offset).clamp(0, 255) as u8;
    }
}

/// Renders `screen_img` seen from `pose` and returns the RGB frame together
/// with the exact pre-noise geometry.
pub fn render_scene(screen_img: &Image, cfg: &SceneConfig, pose: &Pose) -> Result<(Image, GroundTruth), SimulateError> {
    cfg.validate()?;
    let screen = &cfg.screen;
    if (screen_img.width(), screen_img.height()) != (screen.cols_px, screen.rows_px) {
        return Err(SimulateError::DimensionMismatch {
            expected: (screen.cols_px, screen.rows_px),
            found: (screen_img.width(), screen_img.height()),
        });
    }

    let mut corners_px = [Point2::origin(); 4];
    for (c, p) in corners_px.iter_mut().zip(screen.corner_object_points()) {
        *c = project(&cfg.k, pose, &p)?;
    }
    // every point of the screen rectangle must face the camera
    let (hw, hh) = (0.5 * screen.width_mm + cfg.marker_size_mm, 0.5 * screen.height_mm + cfg.marker_size_mm);
    for (x, y) in [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)] {
        project(&cfg.k, pose, &crate::geometry::Point3::new(x, y, 0.0))?;
    }

    let plane_to_frame = plane_homography(&cfg.k, pose)?;
    let h_true = plane_to_frame.compose(&Homography::from_matrix(screen.px_to_mm_matrix())?)?;
    let frame_to_plane = plane_to_frame.inverse()?;

    let bg = cfg.background;
    let mut frame = Image::new(cfg.frame_cols, cfg.frame_rows, 3, bg).expect("three channels");
    paint_screen(&mut frame, &screen_img.to_rgb(), &h_true, bg)?;

    let palette = MarkerSpec::default();
    for (id, p) in CornerId::ALL.into_iter().zip(screen.corner_object_points()) {
        let rgb = if cfg.occlude.contains(&id) { [bg; 3] } else { palette.marker_rgb(id) };
        paint_marker(&mut frame, &plane_to_frame, &frame_to_plane, (p.x, p.y), cfg.marker_size_mm, rgb)?;
    }

    if cfg.reflection > 0.0 {
        paint_reflection(&mut frame, cfg.reflection, signed_off_angle_deg(pose));
    }
    if cfg.noise_sigma > 0.0 {
        add_noise(&mut frame, cfg.noise_sigma, cfg.seed);
    }

    let (distance_mm, off_angle_deg) = pose_to_distance_angle(pose);
    Ok((frame, GroundTruth { pose: *pose, h_true, corners_px, distance_mm, off_angle_deg }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{detect_markers, order_corners};
    use crate::geometry::{solve_pnp, LmConfig};
    use proptest::prelude::*;

    fn check_consistency(cfg: &SceneConfig, gt: &GroundTruth) {
        for (i, (p, o)) in cfg.screen.canonical_corners_px().into_iter().zip(cfg.screen.corner_object_points()).enumerate()
        {
            let via_h = gt.h_true.apply(p).unwrap();
            let via_proj = project(&cfg.k, &gt.pose, &o).unwrap();
            assert!((via_h - gt.corners_px[i]).norm() < 1e-9, "corner {i}: {via_h} vs {}", gt.corners_px[i]);
            assert!((via_proj - gt.corners_px[i]).norm() < 1e-9);
        }
        let (d, a) = pose_to_distance_angle(&gt.pose);
        assert_eq!((d, a), (gt.distance_mm, gt.off_angle_deg));
    }

    #[test]
    fn frontal_pose() {
        let pose = sample_pose(1000.0, 0.0, 0.0).unwrap();
        assert!(pose.rvec.norm() < 1e-15);
        assert!((pose.tvec - Vector3::new(0.0, 0.0, 1000.0)).norm() < 1e-12);
    }

    #[test]
    fn pose_roundtrips_through_distance_and_angle() {
        let pose = sample_pose(1500.0, 40.0, 0.0).unwrap();
        let (d, a) = pose_to_distance_angle(&pose);
        assert!((d - 1500.0).abs() < 1e-9 && (a - 40.0).abs() < 1e-9, "{d} {a}");
        assert!((signed_off_angle_deg(&sample_pose(1500.0, -40.0, 0.0).unwrap()) + 40.0).abs() < 1e-9);

        let rolled = sample_pose(1500.0, 40.0, 25.0).unwrap();
        let (d2, a2) = pose_to_distance_angle(&rolled);
        assert!((d2 - d).abs() < 1e-9 && (a2 - a).abs() < 1e-9);
        assert!((rolled.rvec - pose.rvec).norm() > 0.1);
    }

    #[test]
    fn camera_looks_at_screen_centre() {
        let pose = sample_pose(1200.0, -55.0, 30.0).unwrap();
        let p = pose.transform(&crate::geometry::Point3::origin());
        assert!(p.x.abs() < 1e-9 && p.y.abs() < 1e-9 && (p.z - 1200.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_pose_parameters() {
        for a in [90.0, -90.0, 95.0, f64::NAN] {
            assert!(matches!(sample_pose(1000.0, a, 0.0), Err(SimulateError::InvalidAngle(_))), "{a}");
        }
        assert!(sample_pose(1000.0, 89.9, 0.0).is_ok());
        assert!(matches!(sample_pose(0.0, 0.0, 0.0), Err(SimulateError::InvalidDistance(_))));
        assert!(matches!(sample_pose(-5.0, 0.0, 0.0), Err(SimulateError::InvalidDistance(_))));
    }

    #[test]
    fn dimension_mismatch() {
        let cfg = SceneConfig::default();
        let img = Image::new(10, 10, 1, 0).unwrap();
        let pose = sample_pose(1000.0, 0.0, 0.0).unwrap();
        assert!(matches!(render_scene(&img, &cfg, &pose), Err(SimulateError::DimensionMismatch { .. })));
    }

    #[test]
    fn config_validation() {
        let mut cfg = SceneConfig::default();
        cfg.marker_size_mm = 200.0;
        assert!(cfg.validate().is_err());
        cfg = SceneConfig { reflection: 1.5, ..SceneConfig::default() };
        assert!(cfg.validate().is_err());
        cfg = SceneConfig { frame_cols: 0, ..SceneConfig::default() };
        assert!(cfg.validate().is_err());
        cfg = SceneConfig { noise_sigma: -1.0, ..SceneConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(SceneConfig::default().validate().is_ok());
    }

    #[test]
    fn render_geometry_and_detection() {
        let cfg = SceneConfig::default();
        let screen = synthetic_screen(&cfg.screen);
        let pose = sample_pose(1000.0, 0.0, 0.0).unwrap();
        let (frame, gt) = render_scene(&screen, &cfg, &pose).unwrap();
        assert_eq!((frame.width(), frame.height(), frame.channels()), (1280, 720, 3));
        check_consistency(&cfg, &gt);

        let obs = detect_markers(&frame, &MarkerSpec::default()).unwrap();
        assert_eq!(obs.len(), 4);
        for o in &obs {
            let err = (o.center - gt.corners_px[o.id.index()]).norm();
            assert!(err < 1.0, "{}: {err}", o.id);
        }
        // far shoulder of the frame corners stays background
        assert_eq!(frame.pixel(0, 0), &[64, 64, 64]);
    }

    #[test]
    fn oblique_render_orders_corners() {
        let cfg = SceneConfig::default();
        let screen = synthetic_screen(&cfg.screen);
        let pose = sample_pose(1500.0, 70.0, 0.0).unwrap();
        let (frame, gt) = render_scene(&screen, &cfg, &pose).unwrap();
        check_consistency(&cfg, &gt);
        let corners = order_corners(&detect_markers(&frame, &MarkerSpec::default()).unwrap()).unwrap();
        for (c, t) in corners.iter().zip(&gt.corners_px) {
            assert!((c - t).norm() < 1.5, "{c} vs {t}");
        }
    }

    #[test]
    fn occluded_marker_is_not_detected() {
        let mut cfg = SceneConfig::default();
        cfg.occlude.insert(CornerId::TopLeft);
        let screen = synthetic_screen(&cfg.screen);
        let (frame, _) = render_scene(&screen, &cfg, &sample_pose(1200.0, 20.0, 0.0).unwrap()).unwrap();
        let ids: Vec<CornerId> = detect_markers(&frame, &MarkerSpec::default()).unwrap().iter().map(|o| o.id).collect();
        assert_eq!(ids, vec![CornerId::TopRight, CornerId::BottomRight, CornerId::BottomLeft]);
    }

    #[test]
    fn pnp_recovers_rendered_pose() {
        let cfg = SceneConfig::default();
        let screen = synthetic_screen(&cfg.screen);
        for (d, a, r) in [(800.0, 0.0, 0.0), (1500.0, 40.0, 10.0), (3000.0, -75.0, 15.0)] {
            let pose = sample_pose(d, a, r).unwrap();
            let (_, gt) = render_scene(&screen, &cfg, &pose).unwrap();
            let sol = solve_pnp(&cfg.screen.corner_object_points(), &gt.corners_px, &cfg.k, &LmConfig::default()).unwrap();
            assert!((sol.pose.rvec - pose.rvec).norm() < 1e-6, "{d} {a}");
            assert!((sol.pose.tvec - pose.tvec).norm() < 1e-6, "{d} {a}");
        }
    }

    #[test]
    fn determinism_and_noise() {
        let base = SceneConfig { noise_sigma: 2.0, reflection: 0.3, seed: 11, ..SceneConfig::default() };
        let screen = synthetic_screen(&base.screen);
        let pose = sample_pose(1400.0, 30.0, 5.0).unwrap();
        let (a, _) = render_scene(&screen, &base, &pose).unwrap();
        let (b, _) = render_scene(&screen, &base, &pose).unwrap();
        assert_eq!(a, b);
        let (c, _) = render_scene(&screen, &SceneConfig { seed: 12, ..base.clone() }, &pose).unwrap();
        assert_ne!(a, c);

        // without noise the seed is irrelevant
        let clean = SceneConfig { noise_sigma: 0.0, reflection: 0.0, ..base };
        let (d, _) = render_scene(&screen, &clean, &pose).unwrap();
        let (e, _) = render_scene(&screen, &SceneConfig { seed: 999, ..clean }, &pose).unwrap();
        assert_eq!(d, e);
    }

    #[test]
    fn noise_is_rounded_gaussian() {
        let law = RoundedGaussian::new(2.0);
        let (k, t) = (law.k, &law.thresholds);
        assert_eq!(t.len(), 2 * k as usize + 1);
        assert!(t.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(t[k as usize - 1] + t[k as usize], 1 << 32);
        // bucketed lookup agrees with a plain search
        for u in (0..=u32::MAX).step_by(9973).chain([u32::MAX]) {
            let direct = t.partition_point(|&x| x <= u64::from(u)) as i32 - k;
            assert_eq!(law.offset(u), direct, "{u}");
        }

        let mut img = Image::new(500, 400, 1, 128).unwrap();
        add_noise(&mut img, 2.0, 3);
        let n = img.data().len() as f64;
        let mean = img.data().iter().map(|&v| f64::from(v) - 128.0).sum::<f64>() / n;
        let var = img.data().iter().map(|&v| (f64::from(v) - 128.0 - mean).powi(2)).sum::<f64>() / n;
        // variance of a rounded N(0, 4) is close to 4 + 1/12
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((var - (4.0 + 1.0 / 12.0)).abs() < 0.05, "{var}");
        let zeros = img.data().iter().filter(|&&v| v == 128).count() as f64 / n;
        let p0 = libm::erf(0.25 / std::f64::consts::SQRT_2);
        assert!((zeros - p0).abs() < 0.005, "{zeros} vs {p0}");

        let mut dark = Image::new(100, 100, 1, 0).unwrap();
        add_noise(&mut dark, 5.0, 1);
        assert!(dark.data().contains(&0) && dark.data().iter().any(|&v| v > 0));
    }

    #[test]
    fn reflection_is_one_sided() {
        let cfg = SceneConfig { reflection: 0.5, ..SceneConfig::default() };
        let screen = synthetic_screen(&cfg.screen);
        let mean = |angle: f64| {
            let (f, _) = render_scene(&screen, &cfg, &sample_pose(1500.0, angle, 0.0).unwrap()).unwrap();
            f.data().iter().map(|&v| f64::from(v)).sum::<f64>() / f.data().len() as f64
        };
        assert!(mean(60.0) > mean(-60.0) + 5.0);
    }

    #[test]
    fn screen_behind_camera_is_rejected() {
        let cfg = SceneConfig::default();
        let screen = synthetic_screen(&cfg.screen);
        let pose = sample_pose(100.0, 85.0, 0.0).unwrap();
        assert!(matches!(
            render_scene(&screen, &cfg, &pose),
            Err(SimulateError::Geometry(GeometryError::BehindCamera(_)))
        ));
    }

    #[test]
    fn ground_truth_json_roundtrip() {
        let cfg = SceneConfig::default();
        let screen = synthetic_screen(&cfg.screen);
        let (_, gt) = render_scene(&screen, &cfg, &sample_pose(1500.0, 40.0, 0.0).unwrap()).unwrap();
        let text = gt.to_json();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["pose", "H", "corners", "distance_mm", "angle_deg"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["corners"]["BL"].as_array().unwrap().len(), 2);
        assert_eq!(v["H"].as_array().unwrap().len(), 9);
        let back = GroundTruth::from_json(&text).unwrap();
        assert_eq!(back, gt);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.json");
        gt.write(&path).unwrap();
        assert_eq!(GroundTruth::load(&path).unwrap(), gt);
        assert!(matches!(GroundTruth::from_json("{\"pose\":1}"), Err(SimulateError::Parse(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn rendered_truth_is_consistent(d in 800.0f64..3000.0, a in -75.0f64..75.0, r in -20.0f64..20.0) {
            let cfg = SceneConfig { frame_cols: 320, frame_rows: 180,
                k: CameraIntrinsics { fx: 225.0, fy: 225.0, cx: 160.0, cy: 90.0 }, ..SceneConfig::default() };
            let screen = Image::new(cfg.screen.cols_px, cfg.screen.rows_px, 1, 0).unwrap();
            let pose = sample_pose(d, a, r).unwrap();
            let (_, gt) = render_scene(&screen, &cfg, &pose).unwrap();
            check_consistency(&cfg, &gt);
            prop_assert!((gt.distance_mm - d).abs() < 1e-9);
            prop_assert!((gt.off_angle_deg - a.abs()).abs() < 1e-9);
        }
    }
}
