use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::detect::{detect_markers, order_corners};
use crate::geometry::Pose;
use crate::image::Image;
use crate::rectify::{extract_frustum_mask, rectify_screen};
use crate::simulate::{render_scene, sample_pose, SceneConfig};

use super::{evaluate_with_reference, EvalConfig, EvalError, SweepRecord};

pub const CSV_HEADER: [&str; 7] = ["distance_mm", "angle_deg", "trial", "n_detected", "loc_err_mm", "dice", "latency_ms"];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub distances_mm: Vec<f64>,
    pub angles_deg: Vec<f64>,
    pub trials_per_cell: u32,
    pub noise_sigma: f64,
    pub reflection: f64,
    pub base_seed: u64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            distances_mm: (0..12).map(|i| 800.0 + 200.0 * f64::from(i)).collect(),
            angles_deg: (0..31).map(|i| -75.0 + 5.0 * f64::from(i)).collect(),
            trials_per_cell: 20,
            noise_sigma: 0.0,
            reflection: 0.0,
            base_seed: 1,
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.distances_mm.is_empty() || self.angles_deg.is_empty() {
            return Err(EvalError::InvalidInput("sweep grid needs at least one distance and one angle".into()));
        }
        if self.trials_per_cell == 0 {
            return Err(EvalError::InvalidInput("trials per cell must be at least 1".into()));
        }
        if let Some(d) = self.distances_mm.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(EvalError::InvalidInput(format!("distance {d} must be positive")));
        }
        if let Some(a) = self.angles_deg.iter().find(|a| !(a.abs() < 90.0)) {
            return Err(EvalError::InvalidInput(format!("angle {a} must satisfy |angle| < 90")));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-trial render seed derived from the base seed and the cell.
pub fn trial_seed(base: u64, distance_mm: f64, angle_deg: f64, trial: u32) -> u64 {
    let h = splitmix64(distance_mm.to_bits());
    let h = splitmix64(h ^ angle_deg.to_bits());
    base ^ splitmix64(h ^ u64::from(trial))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub distance_mm: f64,
    pub angle_deg: f64,
    pub trials: usize,
    /// Frames with 0, 1, 2, 3 and 4 correct detections.
    pub detection_histogram: [usize; 5],
    pub fraction_all_detected: f64,
    /// Correct detections over all markers rendered.
    pub marker_detection_rate: f64,
    pub loc_err_mean_mm: Option<f64>,
    pub loc_err_std_mm: Option<f64>,
    pub dice_mean: Option<f64>,
    pub dice_std: Option<f64>,
    pub latency_mean_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub records: Vec<SweepRecord>,
    pub summary: Vec<CellSummary>,
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

/// Per-cell aggregates of records sorted by distance, angle and trial.
pub fn summarize(records: &[SweepRecord]) -> Vec<CellSummary> {
    let mut out = Vec::new();
    for cell in records.chunk_by(|a, b| a.distance_mm == b.distance_mm && a.angle_deg == b.angle_deg) {
        let mut hist = [0usize; 5];
        for r in cell {
            hist[usize::from(r.n_detected.min(4))] += 1;
        }
        let loc: Vec<f64> = cell.iter().filter_map(|r| r.loc_err_mm).collect();
        let dice: Vec<f64> = cell.iter().filter_map(|r| r.dice).collect();
        let lat: Vec<f64> = cell.iter().filter_map(|r| r.latency_ms).collect();
        let (loc_err_mean_mm, loc_err_std_mm) = mean_std(&loc);
        let (dice_mean, dice_std) = mean_std(&dice);
        let n = cell.len();
        let detected: usize = cell.iter().map(|r| usize::from(r.n_detected)).sum();
        out.push(CellSummary {
            distance_mm: cell[0].distance_mm,
            angle_deg: cell[0].angle_deg,
            trials: n,
            detection_histogram: hist,
            fraction_all_detected: hist[4] as f64 / n as f64,
            marker_detection_rate: detected as f64 / (4 * n) as f64,
            loc_err_mean_mm,
            loc_err_std_mm,
            dice_mean,
            dice_std,
            latency_mean_ms: mean_std(&lat).0,
        });
    }
    out
}

fn run_trial(
    screen_img: &Image,
    reference: &Image,
    scene: &SceneConfig,
    cfg: &EvalConfig,
    grid: &SweepGrid,
    (distance_mm, angle_deg, trial): (f64, f64, u32),
) -> SweepRecord {
    let absent = SweepRecord { distance_mm, angle_deg, trial, n_detected: 0, loc_err_mm: None, dice: None, latency_ms: None };
    let scene = SceneConfig {
        noise_sigma: grid.noise_sigma,
        reflection: grid.reflection,
        seed: trial_seed(grid.base_seed, distance_mm, angle_deg, trial),
        ..scene.clone()
    };
    let result = sample_pose(distance_mm, angle_deg, 0.0)
        .map_err(EvalError::from)
        .and_then(|pose| render_scene(screen_img, &scene, &pose).map_err(EvalError::from))
        .and_then(|(frame, gt)| evaluate_with_reference(&frame, reference, &gt, cfg));
    match result {
        Ok(r) => SweepRecord { distance_mm, angle_deg, trial, ..r },
        Err(e) => {
            log::warn!("sweep cell ({distance_mm}, {angle_deg}) trial {trial} failed: {e}");
            absent
        }
    }
}

/// Renders and evaluates every (distance, angle, trial) of the grid.
/// Trials run in parallel; the records come back sorted.
pub fn run_sweep(
    screen_img: &Image,
    grid: &SweepGrid,
    scene: &SceneConfig,
    cfg: &EvalConfig,
) -> Result<SweepOutput, EvalError> {
    grid.validate()?;
    scene.validate()?;
    let reference = extract_frustum_mask(screen_img, &cfg.frustum)?;

    let mut jobs = Vec::new();
    for &d in &grid.distances_mm {
        for &a in &grid.angles_deg {
            for t in 0..grid.trials_per_cell {
                jobs.push((d, a, t));
            }
        }
    }
    let mut records: Vec<SweepRecord> = jobs
        .into_par_iter()
        .map(|job| run_trial(screen_img, &reference, scene, cfg, grid, job))
        .collect();
    records.sort_by(|a, b| {
        a.distance_mm
            .total_cmp(&b.distance_mm)
            .then(a.angle_deg.total_cmp(&b.angle_deg))
            .then(a.trial.cmp(&b.trial))
    });
    let summary = summarize(&records);
    Ok(SweepOutput { records, summary })
}

/// `%.6g`-style rendering: six significant digits, trailing zeros dropped.
fn format_g6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_g6).unwrap_or_default()
}

/// Sweep records as CSV with a header row; absent metrics are empty fields.
pub fn format_csv(records: &[SweepRecord], out: impl Write) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| EvalError::Csv(e.to_string());
    w.write_record(CSV_HEADER).map_err(err)?;
    for r in records {
        w.write_record([
            format_g6(r.distance_mm),
            format_g6(r.angle_deg),
            r.trial.to_string(),
            r.n_detected.to_string(),
            opt(r.loc_err_mm),
            opt(r.dice),
            opt(r.latency_ms),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| EvalError::Csv(e.to_string()))
}

pub fn parse_csv(input: impl Read) -> Result<Vec<SweepRecord>, EvalError> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(|e| EvalError::Csv(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(EvalError::Csv(format!("unexpected header {:?}", header)));
    }
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let row = row.map_err(|e| EvalError::Csv(e.to_string()))?;
        let line = i + 2;
        let field = |k: usize| -> Result<&str, EvalError> {
            row.get(k).ok_or_else(|| EvalError::Csv(format!("line {line}: missing field {}", CSV_HEADER[k])))
        };
        let num = |k: usize| -> Result<f64, EvalError> {
            field(k)?.parse().map_err(|_| EvalError::Csv(format!("line {line}: bad {}", CSV_HEADER[k])))
        };
        let maybe = |k: usize| -> Result<Option<f64>, EvalError> {
            if field(k)?.is_empty() {
                Ok(None)
            } else {
                num(k).map(Some)
            }
        };
        out.push(SweepRecord {
            distance_mm: num(0)?,
            angle_deg: num(1)?,
            trial: field(2)?.parse().map_err(|_| EvalError::Csv(format!("line {line}: bad trial")))?,
            n_detected: field(3)?
                .parse()
                .ok()
                .filter(|n| *n <= 4)
                .ok_or_else(|| EvalError::Csv(format!("line {line}: bad n_detected")))?,
            loc_err_mm: maybe(4)?,
            dice: maybe(5)?,
            latency_ms: maybe(6)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub frames: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub median_ms: f64,
    pub fps: f64,
}

/// Times detection, corner ordering and rectification on `frames` runs over
/// one pre-rendered frame. Runs on the calling thread.
pub fn benchmark_latency(
    screen_img: &Image,
    scene: &SceneConfig,
    pose: &Pose,
    cfg: &EvalConfig,
    frames: usize,
) -> Result<LatencyReport, EvalError> {
    if frames < 10 {
        return Err(EvalError::InvalidInput(format!("benchmark needs at least 10 frames, got {frames}")));
    }
    let (frame, _) = render_scene(screen_img, scene, pose)?;
    let mut times = Vec::with_capacity(frames);
    for _ in 0..frames {
        let start = Instant::now();
        let obs = detect_markers(&frame, &cfg.markers)?;
        let corners = order_corners(&obs)?;
        let out = rectify_screen(&frame, &corners, &cfg.screen, &cfg.warp)?;
        std::hint::black_box(out);
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let (mean, std) = mean_std(&times);
    let (mean_ms, std_ms) = (mean.unwrap(), std.unwrap());
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    let median_ms = if times.len() % 2 == 0 { 0.5 * (times[mid - 1] + times[mid]) } else { times[mid] };
    Ok(LatencyReport { frames, mean_ms, std_ms, median_ms, fps: 1000.0 / mean_ms })
}
