//! Detection, localisation, overlap and latency metrics, and the
//! distance × angle sweep harness.

mod metrics;
mod sweep;

use std::time::Instant;

use thiserror::Error;

use crate::detect::{detect_markers, order_corners, DetectError, MarkerSpec};
use crate::geometry::{GeometryError, Point2, ScreenModel};
use crate::image::Image;
use crate::rectify::{extract_frustum_mask, rectify_screen, FrustumConfig, RectifyError, WarpConfig};
use crate::simulate::{GroundTruth, SimulateError};

pub use metrics::{dice, detection_rate, isotonic_fit, localization_error_mm, spearman, MatchRule};
pub use sweep::{
    benchmark_latency, format_csv, parse_csv, run_sweep, summarize, trial_seed, CellSummary, LatencyReport,
    SweepGrid, SweepOutput, CSV_HEADER,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("mask dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (u32, u32, u8), b: (u32, u32, u8) },
    #[error("no detected marker matches the ground truth")]
    NoMatches,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("sweep CSV error: {0}")]
    Csv(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Rectify(#[from] RectifyError),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
}

/// One evaluated frame. Absent metrics are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub distance_mm: f64,
    pub angle_deg: f64,
    pub trial: u32,
    pub n_detected: u8,
    pub loc_err_mm: Option<f64>,
    pub dice: Option<f64>,
    pub latency_ms: Option<f64>,
}

/// Settings shared by every evaluated frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub screen: ScreenModel,
    pub markers: MarkerSpec,
    pub warp: WarpConfig,
    pub frustum: FrustumConfig,
    pub rule: MatchRule,
    /// When false, latency is not measured and recorded as absent, which
    /// makes sweep output reproducible bit for bit.
    pub timing: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let screen = ScreenModel::default();
        EvalConfig {
            screen,
            markers: MarkerSpec::default(),
            warp: WarpConfig::for_screen(&screen),
            frustum: FrustumConfig::default(),
            rule: MatchRule::default(),
            timing: true,
        }
    }
}

/// Frustum Dice between the frame rectified through `corners` and a
/// precomputed reference mask. `None` when the rectified mask is empty.
pub fn rectified_dice(
    frame: &Image,
    corners: &[Point2; 4],
    reference: &Image,
    cfg: &EvalConfig,
) -> Result<Option<f64>, EvalError> {
    let (rectified, _) = rectify_screen(frame, corners, &cfg.screen, &cfg.warp)?;
    mask_dice(&rectified, reference, cfg)
}

fn mask_dice(rectified: &Image, reference: &Image, cfg: &EvalConfig) -> Result<Option<f64>, EvalError> {
    match extract_frustum_mask(rectified, &cfg.frustum) {
        Ok(mask) => Ok(Some(dice(&mask, reference)?)),
        Err(RectifyError::EmptyMask) => {
            log::warn!("rectified frame has an empty frustum mask; dice left absent");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

/// Evaluates one frame against its ground truth, with the original screen
/// image as the Dice reference.
pub fn evaluate_frame(
    frame: &Image,
    screen_img: &Image,
    gt: &GroundTruth,
    cfg: &EvalConfig,
) -> Result<SweepRecord, EvalError> {
    let reference = extract_frustum_mask(screen_img, &cfg.frustum)?;
    evaluate_with_reference(frame, &reference, gt, cfg)
}

/// Same as [`evaluate_frame`] with the reference frustum mask supplied.
pub fn evaluate_with_reference(
    frame: &Image,
    reference: &Image,
    gt: &GroundTruth,
    cfg: &EvalConfig,
) -> Result<SweepRecord, EvalError> {
    let start = Instant::now();
    let obs = detect_markers(frame, &cfg.markers)?;
    let rectified = match order_corners(&obs) {
        Ok(corners) => Some(rectify_screen(frame, &corners, &cfg.screen, &cfg.warp)?.0),
        Err(DetectError::IncompleteDetection { .. } | DetectError::AmbiguousDetection(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let elapsed = start.elapsed();

    let n_detected = detection_rate(&obs, gt, &cfg.rule) as u8;
    let loc_err_mm = match localization_error_mm(&obs, gt, &cfg.screen) {
        Ok(e) => Some(e),
        Err(EvalError::NoMatches) => None,
        Err(e) => return Err(e),
    };
    let dice = match rectified {
        Some(r) if n_detected == 4 => mask_dice(&r, reference, cfg)?,
        _ => None,
    };
    Ok(SweepRecord {
        distance_mm: gt.distance_mm,
        angle_deg: gt.signed_off_angle_deg(),
        trial: 0,
        n_detected,
        loc_err_mm,
        dice,
        latency_ms: cfg.timing.then_some(elapsed.as_secs_f64() * 1e3),
    })
}
