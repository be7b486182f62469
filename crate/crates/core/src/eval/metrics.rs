use crate::detect::{CornerId, MarkerObservation};
use crate::geometry::{Point2, ScreenModel};
use crate::image::Image;
use crate::simulate::GroundTruth;

use super::EvalError;

/// Acceptance radius for a correct detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchRule {
    pub radius_px: f64,
}

impl Default for MatchRule {
    fn default() -> Self {
        MatchRule { radius_px: 10.0 }
    }
}

impl MatchRule {
    /// Default radius scaled to a frame of `cols` columns (10 px at 1280).
    pub fn for_frame_width(cols: u32) -> Self {
        MatchRule { radius_px: 10.0 * f64::from(cols) / 1280.0 }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.radius_px > 0.0 && self.radius_px.is_finite() {
            Ok(())
        } else {
            Err(EvalError::InvalidInput(format!("match radius {} must be positive", self.radius_px)))
        }
    }
}

/// Observations whose id occurs exactly once, keyed by corner.
fn unique_by_id(obs: &[MarkerObservation]) -> [Option<Point2>; 4] {
    let mut count = [0usize; 4];
    let mut center = [None; 4];
    for o in obs {
        count[o.id.index()] += 1;
        center[o.id.index()] = Some(o.center);
    }
    for i in 0..4 {
        if count[i] != 1 {
            center[i] = None;
        }
    }
    center
}

/// Number of corners detected exactly once within `rule.radius_px` of their
/// true centre.
pub fn detection_rate(obs: &[MarkerObservation], gt: &GroundTruth, rule: &MatchRule) -> usize {
    unique_by_id(obs)
        .iter()
        .zip(&gt.corners_px)
        .filter(|(c, t)| c.is_some_and(|c| (c - *t).norm() <= rule.radius_px))
        .count()
}

/// Mean corner error in mm on the screen plane over corners whose id was
/// detected exactly once. Both detected and true centres are pulled back to
/// the screen raster through the true homography, then scaled per axis.
pub fn localization_error_mm(
    obs: &[MarkerObservation],
    gt: &GroundTruth,
    screen: &ScreenModel,
) -> Result<f64, EvalError> {
    let inv = gt.h_true.inverse()?;
    let (sx, sy) = (screen.mm_per_px_x(), screen.mm_per_px_y());
    let mut sum = 0.0;
    let mut n = 0usize;
    for id in CornerId::ALL {
        let Some(c) = unique_by_id(obs)[id.index()] else {
            continue;
        };
        let a = inv.apply(c)?;
        let b = inv.apply(gt.corners_px[id.index()])?;
        sum += ((a.x - b.x) * sx).hypot((a.y - b.y) * sy);
        n += 1;
    }
    if n == 0 {
        return Err(EvalError::NoMatches);
    }
    Ok(sum / n as f64)
}

/// Dice overlap of two binary masks (nonzero is foreground); 1 when both
/// are empty.
pub fn dice(a: &Image, b: &Image) -> Result<f64, EvalError> {
    if !a.same_shape(b) {
        return Err(EvalError::DimensionMismatch {
            a: (a.width(), a.height(), a.channels()),
            b: (b.width(), b.height(), b.channels()),
        });
    }
    let (mut na, mut nb, mut both) = (0u64, 0u64, 0u64);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x != 0, y != 0);
        na += u64::from(x);
        nb += u64::from(y);
        both += u64::from(x && y);
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

/// Average ranks with ties sharing the mean of their positions (1-based).
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` for fewer than two points or a
/// constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Least-squares non-decreasing fit (pool adjacent violators).
pub fn isotonic_fit(y: &[f64]) -> Vec<f64> {
    // blocks of (mean, weight)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, w2) = blocks[blocks.len() - 1];
            let (m1, w1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            *blocks.last_mut().unwrap() = ((m1 * w1 as f64 + m2 * w2 as f64) / w as f64, w);
        }
    }
    blocks.into_iter().flat_map(|(m, w)| std::iter::repeat_n(m, w)).collect()
}
