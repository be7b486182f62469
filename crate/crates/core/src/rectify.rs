//! Perspective warping back to the screen raster and frustum segmentation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{label_classes, Connectivity};
use crate::geometry::{estimate_homography, GeometryError, Homography, Point2, ScreenModel};
use crate::image::Image;

#[derive(Debug, Error)]
pub enum RectifyError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("frustum mask is empty after thresholding")]
    EmptyMask,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpConfig {
    pub out_cols: u32,
    pub out_rows: u32,
    /// Value written where the source is not sampled.
    pub fill: u8,
}

impl WarpConfig {
    pub fn for_screen(screen: &ScreenModel) -> Self {
        WarpConfig { out_cols: screen.cols_px, out_rows: screen.rows_px, fill: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMethod {
    Otsu,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrustumConfig {
    pub method: ThresholdMethod,
    /// Used by [`ThresholdMethod::Fixed`]; foreground is `gray > threshold`.
    pub threshold: u8,
}

impl Default for FrustumConfig {
    fn default() -> Self {
        FrustumConfig { method: ThresholdMethod::Otsu, threshold: 127 }
    }
}

/// Source position sampled for output pixel `(u, v)`; `None` when the point
/// maps to infinity. Same arithmetic as [`Homography::apply`].
#[inline]
pub fn source_coordinates(h: &Homography, u: f64, v: f64) -> Option<(f64, f64)> {
    h.apply(Point2::new(u, v)).ok().map(|p| (p.x, p.y))
}

/// Bilinear sample of channel-interleaved `src` at a position already known
/// to lie in `[0, w-1] × [0, h-1]`.
#[inline(always)]
fn sample_bilinear<const CH: usize>(data: &[u8], w: usize, h: usize, x: f64, y: f64, out: &mut [u8]) {
    // non-negative, so truncation is the floor
    let x0 = (x as usize).min(w - 1);
    let y0 = (y as usize).min(h - 1);
    let dx = if x0 + 1 < w { CH } else { 0 };
    let dy = if y0 + 1 < h { w * CH } else { 0 };
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let p = &data[(y0 * w + x0) * CH..];
    for c in 0..CH {
        let p00 = f64::from(p[c]);
        let p01 = f64::from(p[dx + c]);
        let p10 = f64::from(p[dy + c]);
        let p11 = f64::from(p[dy + dx + c]);
        let top = p00 + fx * (p01 - p00);
        let bottom = p10 + fx * (p11 - p10);
        let v = top + fy * (bottom - top);
        out[c] = (v + 0.5).clamp(0.0, 255.0) as u8;
    }
}

fn warp_rows<const CH: usize>(src: &Image, h: &Homography, out: &mut Image) {
    let (w, hh) = (src.width() as usize, src.height() as usize);
    let (max_x, max_y) = ((w - 1) as f64, (hh - 1) as f64);
    let cols = out.width() as usize;
    let data = src.data();
    for (v, row) in out.data_mut().chunks_exact_mut(cols * CH).enumerate() {
        for (u, px) in row.chunks_exact_mut(CH).enumerate() {
            let Some((x, y)) = source_coordinates(h, u as f64, v as f64) else {
                continue;
            };
            if x >= 0.0 && y >= 0.0 && x <= max_x && y <= max_y {
                sample_bilinear::<CH>(data, w, hh, x, y, px);
            }
        }
    }
}

/// Inverse-mapping warp: output pixel `(u, v)` takes the bilinear sample of
/// `src` at `h(u, v)`. `h` therefore maps output coordinates to source
/// coordinates; samples outside the source become `cfg.fill`.
pub fn warp_perspective(src: &Image, h: &Homography, cfg: &WarpConfig) -> Result<Image, RectifyError> {
    if cfg.out_cols == 0 || cfg.out_rows == 0 {
        return Err(RectifyError::InvalidConfig("output dimensions must be positive".into()));
    }
    let mut out = Image::new(cfg.out_cols, cfg.out_rows, src.channels(), cfg.fill)
        .expect("source channel count is valid");
    if src.width() == 0 || src.height() == 0 {
        return Ok(out);
    }
    if src.channels() == 3 {
        warp_rows::<3>(src, h, &mut out);
    } else {
        warp_rows::<1>(src, h, &mut out);
    }
    Ok(out)
}

/// Warps `frame` onto the screen raster given the observed marker centres
/// (TL, TR, BR, BL). The returned homography maps screen pixels to frame
/// pixels.
pub fn rectify_screen(
    frame: &Image,
    corners: &[Point2; 4],
    screen: &ScreenModel,
    cfg: &WarpConfig,
) -> Result<(Image, Homography), RectifyError> {
    let h = estimate_homography(&screen.canonical_corners_px(), corners)?;
    let out = warp_perspective(frame, &h, cfg)?;
    Ok((out, h))
}

/// Otsu threshold of a 256-bin histogram for the rule `foreground = v > t`.
///
/// When several thresholds maximise the between-class variance, the middle
/// of the first and last maximiser is returned. A constant image yields its
/// single value.
pub fn otsu_threshold(hist: &[u64; 256]) -> u8 {
    let total: u64 = hist.iter().sum();
    let weighted: f64 = hist.iter().enumerate().map(|(v, &n)| v as f64 * n as f64).sum();
    let mut best = -1.0f64;
    let (mut first, mut last) = (None, None);
    let (mut w0, mut s0) = (0u64, 0.0f64);
    for t in 0..255usize {
        w0 += hist[t];
        s0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let mu0 = s0 / w0 as f64;
        let mu1 = (weighted - s0) / w1 as f64;
        let between = w0 as f64 * w1 as f64 * (mu0 - mu1).powi(2);
        if between > best * (1.0 + 1e-12) {
            best = between;
            first = Some(t);
            last = Some(t);
        } else if between >= best * (1.0 - 1e-12) {
            last = Some(t);
        }
    }
    match (first, last) {
        (Some(a), Some(b)) => ((a + b) / 2) as u8,
        _ => hist.iter().position(|&n| n > 0).unwrap_or(0) as u8,
    }
}

pub fn histogram(gray: &Image) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &v in gray.data() {
        hist[v as usize] += 1;
    }
    hist
}

/// Binary (0/255) mask of the largest 4-connected bright region.
pub fn extract_frustum_mask(img: &Image, cfg: &FrustumConfig) -> Result<Image, RectifyError> {
    let gray = img.to_gray();
    let t = match cfg.method {
        ThresholdMethod::Otsu => otsu_threshold(&histogram(&gray)),
        ThresholdMethod::Fixed => cfg.threshold,
    };
    let classes: Vec<u8> = gray.data().iter().map(|&v| u8::from(v > t)).collect();
    let labelling = label_classes(gray.width(), gray.height(), &classes, Connectivity::Four);
    let mut largest: Option<(usize, usize)> = None;
    for (i, c) in labelling.components.iter().enumerate() {
        if largest.is_none_or(|(_, n)| c.count > n) {
            largest = Some((i, c.count));
        }
    }
    let (idx, _) = largest.ok_or(RectifyError::EmptyMask)?;
    let keep = idx as u32 + 1;
    let data = labelling.labels.iter().map(|&l| if l == keep { 255 } else { 0 }).collect();
    Ok(Image::from_raw(gray.width(), gray.height(), 1, data).expect("mask shape matches"))
}
