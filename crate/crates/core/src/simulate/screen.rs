//! Built-in ultrasound-like screen content.
//!
//! Black display with a bright sector-shaped echo region hanging from an
//! apex near the top edge, plus a small status element at the right edge
//! that is disconnected from the sector.

use crate::geometry::ScreenModel;
use crate::image::Image;

const APEX_Y: f64 = 0.08;
const R_MIN: f64 = 0.10;
const R_MAX: f64 = 0.88;
const HALF_ANGLE_DEG: f64 = 38.0;

/// Whether raster pixel `(x, y)` of a `cols × rows` screen lies in the
/// echo sector. Sizes scale with the raster height.
pub fn frustum_contains(cols: u32, rows: u32, x: u32, y: u32) -> bool {
    let rows_f = f64::from(rows);
    let dx = f64::from(x) - 0.5 * f64::from(cols - 1);
    let dy = f64::from(y) - APEX_Y * rows_f;
    let r = dx.hypot(dy);
    if r < R_MIN * rows_f || r > R_MAX * rows_f || dy <= 0.0 {
        return false;
    }
    dx.abs().atan2(dy).to_degrees() <= HALF_ANGLE_DEG
}

fn ui_element(cols: u32, rows: u32, x: u32, y: u32) -> bool {
    let (u, v) = (f64::from(x) / f64::from(cols), f64::from(y) / f64::from(rows));
    (0.86..0.95).contains(&u) && (0.45..0.49).contains(&v)
}

/// Three-channel gray screen image at the model's raster size. Sector
/// intensities vary smoothly within [150, 210].
pub fn synthetic_screen(screen: &ScreenModel) -> Image {
    let (cols, rows) = (screen.cols_px, screen.rows_px);
    let apex_x = 0.5 * f64::from(cols - 1);
    let apex_y = APEX_Y * f64::from(rows);
    let scale = f64::from(rows) / 480.0;
    Image::from_fn_rgb(cols, rows, |x, y| {
        let v = if frustum_contains(cols, rows, x, y) {
            let dx = f64::from(x) - apex_x;
            let dy = f64::from(y) - apex_y;
            let r = dx.hypot(dy) / scale;
            let phi = dx.atan2(dy);
            let t = 0.5 + 0.3 * (r / 17.0).sin() * (5.0 * phi).cos() + 0.2 * (r / 61.0).cos();
            (150.0 + 60.0 * t.clamp(0.0, 1.0)).round() as u8
        } else if ui_element(cols, rows, x, y) {
            230
        } else {
            0
        };
        [v, v, v]
    })
}
