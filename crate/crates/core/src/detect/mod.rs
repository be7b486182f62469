//! Colour-fiducial detection of the four screen corner markers.
//!
//! Each corner carries a marker of a distinct hue. A frame is classified
//! pixel by pixel against per-corner HSV gates, 4-connected components are
//! extracted per corner, and the largest qualifying component becomes that
//! corner's observation. Detections can also be exchanged as JSON so that
//! an external detector can drive the rest of the pipeline.

mod components;
mod hsv;
mod io;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point2, Point3, ScreenModel};
use crate::image::Image;

pub use components::{connected_components, Component, Connectivity, PixelBox};
pub(crate) use components::label_classes;
pub use hsv::{hsv_to_rgb, rgb_to_hsv};
pub use io::{format_detections, load_detections, parse_detections, write_detections, DetectionFrame};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("marker detection needs a 3-channel frame, got {0} channel(s)")]
    InvalidFrame(u8),
    #[error("incomplete detection: found {}", format_ids(.present))]
    IncompleteDetection { present: Vec<CornerId> },
    #[error("ambiguous detection: corner {0} detected more than once")]
    AmbiguousDetection(CornerId),
    #[error("detection file parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid marker spec: {0}")]
    InvalidSpec(String),
}

fn format_ids(ids: &[CornerId]) -> String {
    if ids.is_empty() {
        return "none".into();
    }
    ids.iter().map(CornerId::as_str).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CornerId {
    #[serde(rename = "TL")]
    TopLeft,
    #[serde(rename = "TR")]
    TopRight,
    #[serde(rename = "BR")]
    BottomRight,
    #[serde(rename = "BL")]
    BottomLeft,
}

impl CornerId {
    pub const ALL: [CornerId; 4] =
        [CornerId::TopLeft, CornerId::TopRight, CornerId::BottomRight, CornerId::BottomLeft];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CornerId::TopLeft => "TL",
            CornerId::TopRight => "TR",
            CornerId::BottomRight => "BR",
            CornerId::BottomLeft => "BL",
        }
    }

    /// Marker centre on the screen plane, in mm.
    pub fn object_point(self, screen: &ScreenModel) -> Point3 {
        screen.corner_object_points()[self.index()]
    }

    /// Marker centre in screen raster pixels.
    pub fn screen_px(self, screen: &ScreenModel) -> Point2 {
        screen.canonical_corners_px()[self.index()]
    }
}

impl fmt::Display for CornerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CornerId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "TL" => Ok(CornerId::TopLeft),
            "TR" => Ok(CornerId::TopRight),
            "BR" => Ok(CornerId::BottomRight),
            "BL" => Ok(CornerId::BottomLeft),
            other => Err(format!("unknown corner id {other:?} (expected TL, TR, BR or BL)")),
        }
    }
}

/// Axis-aligned box in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x && p.x <= self.x + self.w && p.y >= self.y && p.y <= self.y + self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerObservation {
    pub id: CornerId,
    pub bbox: BBox,
    pub center: Point2,
    /// Component area over bbox area. Not a calibrated confidence.
    pub score: f64,
}

/// Half-open hue interval `[lo, hi)` in degrees; wraps through 360 when
/// `lo > hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HueInterval {
    pub lo: f64,
    pub hi: f64,
}

impl HueInterval {
    pub fn new(lo: f64, hi: f64) -> Self {
        HueInterval { lo, hi }
    }

    pub fn contains(&self, hue: f64) -> bool {
        if self.lo <= self.hi {
            hue >= self.lo && hue < self.hi
        } else {
            hue >= self.lo || hue < self.hi
        }
    }

    /// Hue half-way through the interval, following the wrap.
    pub fn midpoint(&self) -> f64 {
        if self.lo <= self.hi {
            0.5 * (self.lo + self.hi)
        } else {
            (0.5 * (self.lo + self.hi + 360.0)).rem_euclid(360.0)
        }
    }

    fn segments(&self) -> Vec<(f64, f64)> {
        if self.lo <= self.hi {
            vec![(self.lo, self.hi)]
        } else {
            vec![(self.lo, 360.0), (0.0, self.hi)]
        }
    }

    fn overlaps(&self, other: &HueInterval) -> bool {
        self.segments()
            .iter()
            .any(|a| other.segments().iter().any(|b| a.0 < b.1 && b.0 < a.1))
    }
}

/// Appearance of the four corner markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerSpec {
    /// Hue gates in TL, TR, BR, BL order.
    pub hues: [HueInterval; 4],
    pub sat_min: f64,
    pub val_min: f64,
    pub min_area_px: usize,
    pub max_detections_per_id: usize,
}

impl Default for MarkerSpec {
    fn default() -> Self {
        MarkerSpec {
            hues: [
                HueInterval::new(350.0, 10.0),
                HueInterval::new(110.0, 130.0),
                HueInterval::new(230.0, 250.0),
                HueInterval::new(50.0, 70.0),
            ],
            sat_min: 0.5,
            val_min: 0.35,
            min_area_px: 25,
            max_detections_per_id: 1,
        }
    }
}

impl MarkerSpec {
    pub fn validate(&self) -> Result<(), DetectError> {
        for (id, h) in CornerId::ALL.iter().zip(&self.hues) {
            let in_range = |v: f64| (0.0..=360.0).contains(&v);
            if !in_range(h.lo) || !in_range(h.hi) || h.lo == h.hi {
                return Err(DetectError::InvalidSpec(format!(
                    "hue interval for {id} must lie in [0, 360] and be non-empty, got [{}, {})",
                    h.lo, h.hi
                )));
            }
        }
        for i in 0..4 {
            for j in i + 1..4 {
                if self.hues[i].overlaps(&self.hues[j]) {
                    return Err(DetectError::InvalidSpec(format!(
                        "hue intervals of {} and {} overlap",
                        CornerId::ALL[i],
                        CornerId::ALL[j]
                    )));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.sat_min) || !(0.0..=1.0).contains(&self.val_min) {
            return Err(DetectError::InvalidSpec("sat_min and val_min must lie in [0, 1]".into()));
        }
        if self.min_area_px == 0 || self.max_detections_per_id == 0 {
            return Err(DetectError::InvalidSpec(
                "min_area_px and max_detections_per_id must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn hue(&self, id: CornerId) -> HueInterval {
        self.hues[id.index()]
    }

    /// Fully saturated colour at the centre of a corner's hue gate.
    pub fn marker_rgb(&self, id: CornerId) -> [u8; 3] {
        hsv_to_rgb(self.hue(id).midpoint(), 1.0, 1.0)
    }

    /// Gate index + 1 of the pixel, or 0 when no gate accepts it.
    #[inline]
    fn classify(&self, r: u8, g: u8, b: u8) -> u8 {
        let max = r.max(g).max(b);
        let min = r.min(g).min(b);
        // cheap rejections before computing the hue
        if f64::from(max) < self.val_min * 255.0 || max == min {
            return 0;
        }
        let (h, s, v) = rgb_to_hsv(r, g, b);
        if s < self.sat_min || v < self.val_min {
            return 0;
        }
        let mut class = 0;
        for (i, gate) in self.hues.iter().enumerate() {
            if gate.contains(h) {
                debug_assert!(class == 0, "hue {h} accepted by two gates");
                class = i as u8 + 1;
            }
        }
        class
    }
}

/// Detects the corner markers in an RGB frame.
///
/// Output is sorted TL, TR, BR, BL; corners with no component of at least
/// `min_area_px` pixels are absent.
pub fn detect_markers(frame: &Image, spec: &MarkerSpec) -> Result<Vec<MarkerObservation>, DetectError> {
    if frame.channels() != 3 {
        return Err(DetectError::InvalidFrame(frame.channels()));
    }
    let classes: Vec<u8> = frame
        .data()
        .chunks_exact(3)
        .map(|p| spec.classify(p[0], p[1], p[2]))
        .collect();
    let labelling = label_classes(frame.width(), frame.height(), &classes, Connectivity::Four);

    let mut out = Vec::new();
    for id in CornerId::ALL {
        let class = id.index() as u8 + 1;
        let mut candidates: Vec<&Component> = labelling
            .components
            .iter()
            .filter(|c| c.class == class && c.count >= spec.min_area_px)
            .collect();
        // stable sort keeps raster order among equal sizes
        candidates.sort_by(|a, b| b.count.cmp(&a.count));
        for c in candidates.into_iter().take(spec.max_detections_per_id) {
            let area = f64::from(c.bbox.w) * f64::from(c.bbox.h);
            out.push(MarkerObservation {
                id,
                bbox: BBox {
                    x: f64::from(c.bbox.x),
                    y: f64::from(c.bbox.y),
                    w: f64::from(c.bbox.w),
                    h: f64::from(c.bbox.h),
                },
                center: c.centroid,
                score: c.count as f64 / area,
            });
        }
    }
    Ok(out)
}

/// Marker centres keyed by corner, in TL, TR, BR, BL order.
pub fn order_corners(obs: &[MarkerObservation]) -> Result<[Point2; 4], DetectError> {
    let mut found: [Option<Point2>; 4] = [None; 4];
    for o in obs {
        let slot = &mut found[o.id.index()];
        if slot.is_some() {
            return Err(DetectError::AmbiguousDetection(o.id));
        }
        *slot = Some(o.center);
    }
    match found {
        [Some(a), Some(b), Some(c), Some(d)] => Ok([a, b, c, d]),
        _ => Err(DetectError::IncompleteDetection {
            present: CornerId::ALL.into_iter().filter(|id| found[id.index()].is_some()).collect(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paint_square(img: &mut Image, x0: u32, y0: u32, size: u32, rgb: [u8; 3]) {
        for y in y0..y0 + size {
            for x in x0..x0 + size {
                img.pixel_mut(x, y).copy_from_slice(&rgb);
            }
        }
    }

    fn four_marker_frame() -> Image {
        let spec = MarkerSpec::default();
        let mut img = Image::new(200, 150, 3, 64).unwrap();
        paint_square(&mut img, 10, 10, 12, spec.marker_rgb(CornerId::TopLeft));
        paint_square(&mut img, 170, 12, 12, spec.marker_rgb(CornerId::TopRight));
        paint_square(&mut img, 172, 120, 12, spec.marker_rgb(CornerId::BottomRight));
        paint_square(&mut img, 8, 118, 12, spec.marker_rgb(CornerId::BottomLeft));
        img
    }

    #[test]
    fn default_palette_is_valid_and_distinct() {
        let spec = MarkerSpec::default();
        spec.validate().unwrap();
        assert_eq!(spec.marker_rgb(CornerId::TopLeft), [255, 0, 0]);
        assert_eq!(spec.marker_rgb(CornerId::TopRight), [0, 255, 0]);
        assert_eq!(spec.marker_rgb(CornerId::BottomRight), [0, 0, 255]);
        assert_eq!(spec.marker_rgb(CornerId::BottomLeft), [255, 255, 0]);
    }

    #[test]
    fn overlapping_gates_rejected() {
        let mut spec = MarkerSpec::default();
        spec.hues[1] = HueInterval::new(355.0, 20.0);
        assert!(matches!(spec.validate(), Err(DetectError::InvalidSpec(_))));
        let mut spec = MarkerSpec::default();
        spec.min_area_px = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn wrapping_interval() {
        let red = HueInterval::new(350.0, 10.0);
        assert!(red.contains(355.0) && red.contains(0.0) && red.contains(9.99));
        assert!(!red.contains(10.0) && !red.contains(180.0));
        assert_eq!(red.midpoint(), 0.0);
        assert_eq!(HueInterval::new(110.0, 130.0).midpoint(), 120.0);
    }

    #[test]
    fn blank_frame() {
        let img = Image::new(64, 48, 3, 128).unwrap();
        assert!(detect_markers(&img, &MarkerSpec::default()).unwrap().is_empty());
    }

    #[test]
    fn painted_markers() {
        let obs = detect_markers(&four_marker_frame(), &MarkerSpec::default()).unwrap();
        let ids: Vec<_> = obs.iter().map(|o| o.id).collect();
        assert_eq!(ids, CornerId::ALL.to_vec());
        assert_eq!(obs[0].center, Point2::new(15.5, 15.5));
        assert_eq!(obs[0].score, 1.0);
        assert_eq!(obs[2].bbox, BBox { x: 172.0, y: 120.0, w: 12.0, h: 12.0 });
        for o in &obs {
            assert!(o.bbox.contains(o.center));
        }
    }

    #[test]
    fn keeps_largest_component_and_drops_specks() {
        let spec = MarkerSpec::default();
        let mut img = four_marker_frame();
        let red = spec.marker_rgb(CornerId::TopLeft);
        paint_square(&mut img, 60, 60, 4, red); // 16 px, below min area
        paint_square(&mut img, 90, 60, 6, red); // 36 px, smaller than the real marker
        let obs = detect_markers(&img, &spec).unwrap();
        assert_eq!(obs.len(), 4);
        assert_eq!(obs[0].center, Point2::new(15.5, 15.5));
    }

    #[test]
    fn gray_frame_is_rejected() {
        let img = Image::new(4, 4, 1, 0).unwrap();
        assert!(matches!(detect_markers(&img, &MarkerSpec::default()), Err(DetectError::InvalidFrame(1))));
    }

    #[test]
    fn deterministic() {
        let img = four_marker_frame();
        let a = detect_markers(&img, &MarkerSpec::default()).unwrap();
        let b = detect_markers(&img, &MarkerSpec::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ordering_errors() {
        let obs = detect_markers(&four_marker_frame(), &MarkerSpec::default()).unwrap();
        let corners = order_corners(&obs).unwrap();
        assert_eq!(corners[0], obs[0].center);
        assert_eq!(corners[3], obs[3].center);

        match order_corners(&obs[1..]) {
            Err(DetectError::IncompleteDetection { present }) => {
                assert_eq!(present, vec![CornerId::TopRight, CornerId::BottomRight, CornerId::BottomLeft]);
            }
            other => panic!("unexpected {other:?}"),
        }
        let mut dup = obs.clone();
        dup.push(obs[2]);
        assert!(matches!(order_corners(&dup), Err(DetectError::AmbiguousDetection(CornerId::BottomRight))));
    }

    #[test]
    fn corner_id_strings() {
        for id in CornerId::ALL {
            assert_eq!(id.as_str().parse::<CornerId>().unwrap(), id);
        }
        assert!("XX".parse::<CornerId>().is_err());
    }
}
