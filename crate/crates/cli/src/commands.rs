use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use screentrack::detect::{detect_markers, load_detections, order_corners, write_detections, CornerId, DetectionFrame};
use screentrack::eval::{benchmark_latency, format_csv, run_sweep, SweepGrid};
use screentrack::geometry::{pose_to_distance_angle, signed_off_angle_deg, solve_pnp};
use screentrack::image::Image;
use screentrack::rectify::rectify_screen;
use screentrack::simulate::{render_scene, sample_pose, synthetic_screen};
use serde_json::json;

use crate::config::AppConfig;
use crate::error::CliError;
use crate::{BenchArgs, DetectArgs, PoseArgs, RectifyArgs, SimulateArgs, SweepArgs};

fn write_text(path: &Path, text: String) -> Result<(), CliError> {
    std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn load_screen(cfg: &AppConfig, path: Option<&Path>) -> Result<Image, CliError> {
    match path {
        Some(p) => Ok(Image::read(p)?),
        None => Ok(synthetic_screen(&cfg.screen)),
    }
}

fn select_frame(frames: Vec<DetectionFrame>, name: Option<&str>) -> Result<DetectionFrame, CliError> {
    match name {
        Some(n) => frames
            .into_iter()
            .find(|f| f.name == n)
            .ok_or_else(|| CliError::Usage(format!("no frame named {n:?} in the detection file"))),
        None => frames.into_iter().next().ok_or_else(|| CliError::Usage("detection file has no frames".into())),
    }
}

fn frame_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "frame".into())
}

pub fn detect(cfg: &AppConfig, a: &DetectArgs) -> Result<(), CliError> {
    let frame = Image::read(&a.input)?;
    let markers = detect_markers(&frame, &cfg.markers)?;
    for id in CornerId::ALL {
        match markers.iter().find(|m| m.id == id) {
            Some(m) => println!("{id}  ({:.2}, {:.2})  score {:.3}", m.center.x, m.center.y, m.score),
            None => println!("{id}  not found"),
        }
    }
    write_detections(&a.out, &[DetectionFrame { name: frame_name(&a.input), markers }])?;
    Ok(())
}

pub fn rectify(cfg: &AppConfig, a: &RectifyArgs) -> Result<(), CliError> {
    let frame = Image::read(&a.input)?;
    let markers = match &a.detections {
        Some(path) => select_frame(load_detections(path)?, a.frame.as_deref())?.markers,
        None => detect_markers(&frame, &cfg.markers)?,
    };
    let corners = order_corners(&markers)?;
    let (out, h) = rectify_screen(&frame, &corners, &cfg.screen, &cfg.warp_config())?;
    out.write(&a.out)?;
    if let Some(path) = &a.homography_out {
        write_text(path, serde_json::to_string_pretty(&json!({ "H": h.to_row_major() })).expect("json"))?;
    }
    Ok(())
}

pub fn pose(cfg: &AppConfig, a: &PoseArgs) -> Result<(), CliError> {
    let frame = select_frame(load_detections(&a.detections)?, a.frame.as_deref())?;
    let corners = order_corners(&frame.markers)?;
    let sol = solve_pnp(&cfg.screen.corner_object_points(), &corners, &cfg.camera, &cfg.lm)?;
    let (distance_mm, off_angle_deg) = pose_to_distance_angle(&sol.pose);
    let signed = signed_off_angle_deg(&sol.pose);
    let doc = json!({
        "rvec": sol.pose.rvec.as_slice(),
        "tvec": sol.pose.tvec.as_slice(),
        "distance_mm": distance_mm,
        "off_angle_deg": off_angle_deg,
        "signed_off_angle_deg": signed,
        "rms_px": sol.rms_px,
        "iterations": sol.iterations,
    });
    write_text(&a.out, serde_json::to_string_pretty(&doc).expect("json"))?;
    println!("distance {distance_mm:.3} mm, off-screen angle {signed:.3} deg, rms {:.4} px", sol.rms_px);
    Ok(())
}

pub fn simulate(cfg: &AppConfig, a: &SimulateArgs) -> Result<(), CliError> {
    let screen = load_screen(cfg, a.screen.as_deref())?;
    let scene = screentrack::simulate::SceneConfig {
        noise_sigma: a.noise,
        reflection: a.reflection,
        occlude: a.occlude.iter().copied().collect(),
        seed: a.seed,
        ..cfg.scene_config()
    };
    let pose = sample_pose(a.distance, a.angle, a.roll)?;
    let (frame, gt) = render_scene(&screen, &scene, &pose)?;
    frame.write(&a.out)?;
    if let Some(path) = &a.gt_out {
        write_text(path, gt.to_json())?;
    }
    if let Some(path) = &a.screen_out {
        screen.write(path)?;
    }
    Ok(())
}

/// `a,b,c` or `start:stop:step` (inclusive of `stop` up to rounding).
pub fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    let bad = || format!("cannot parse list `{text}`");
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    if parts.len() == 3 {
        let v: Vec<f64> = parts.iter().map(|p| p.parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
        let (start, stop, step) = (v[0], v[1], v[2]);
        if !(step > 0.0) || stop < start {
            return Err(format!("range `{text}` needs step > 0 and stop >= start"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| start + step * i as f64).collect());
    }
    if parts.len() != 1 {
        return Err(bad());
    }
    text.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| bad())).collect()
}

/// Grid file with optional `grid.*` keys over the default grid.
pub fn parse_grid(text: &str, origin: &str) -> Result<SweepGrid, CliError> {
    let mut g = SweepGrid::default();
    for (i, raw) in text.lines().enumerate() {
        let err = |m: String| CliError::Usage(format!("{origin}:{}: {m}", i + 1));
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("{key}: cannot parse `{v}`")));
        match key {
            "grid.distances_mm" => g.distances_mm = parse_list(value).map_err(err)?,
            "grid.angles_deg" => g.angles_deg = parse_list(value).map_err(err)?,
            "grid.trials_per_cell" => {
                g.trials_per_cell = value.parse().map_err(|_| err(format!("{key}: cannot parse `{value}`")))?
            }
            "grid.noise_sigma" => g.noise_sigma = num(value)?,
            "grid.reflection" => g.reflection = num(value)?,
            "grid.base_seed" => g.base_seed = value.parse().map_err(|_| err(format!("{key}: cannot parse `{value}`")))?,
            _ => return Err(err(format!("{key}: unknown key"))),
        }
    }
    Ok(g)
}

fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("summary.json")
}

pub fn sweep(cfg: &AppConfig, a: &SweepArgs) -> Result<(), CliError> {
    let mut grid = match &a.grid {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("cannot read {}: {e}", p.display())))?;
            parse_grid(&text, &p.display().to_string())?
        }
        None => SweepGrid::default(),
    };
    if let Some(d) = &a.distances {
        grid.distances_mm = parse_list(d).map_err(CliError::Usage)?;
    }
    if let Some(v) = &a.angles {
        grid.angles_deg = parse_list(v).map_err(CliError::Usage)?;
    }
    grid.trials_per_cell = a.trials.unwrap_or(grid.trials_per_cell);
    grid.noise_sigma = a.noise.unwrap_or(grid.noise_sigma);
    grid.reflection = a.reflection.unwrap_or(grid.reflection);
    grid.base_seed = a.seed.unwrap_or(grid.base_seed);
    grid.validate()?;
    let scene = cfg.scene_config();
    let probe = screentrack::simulate::SceneConfig { noise_sigma: grid.noise_sigma, reflection: grid.reflection, ..scene.clone() };
    probe.validate()?;

    let screen = load_screen(cfg, a.screen.as_deref())?;
    let out = run_sweep(&screen, &grid, &scene, &cfg.eval_config(!a.no_timing))?;

    let file = File::create(&a.out).map_err(|e| CliError::Io(format!("cannot write {}: {e}", a.out.display())))?;
    format_csv(&out.records, BufWriter::new(file))?;
    let summary = a.summary_out.clone().unwrap_or_else(|| summary_path(&a.out));
    write_text(&summary, serde_json::to_string_pretty(&out.summary).expect("json"))?;

    let regime: Vec<_> = out.records.iter().filter(|r| r.angle_deg.abs() <= 60.0).collect();
    if !regime.is_empty() {
        let all4 = regime.iter().filter(|r| r.n_detected == 4).count() as f64 / regime.len() as f64;
        let dice: Vec<f64> = regime.iter().filter_map(|r| r.dice).collect();
        let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        let loc: Vec<f64> = regime.iter().filter_map(|r| r.loc_err_mm).collect();
        println!(
            "|angle| <= 60: {} frames, 4/4 detected {:.4}, mean dice {:.4}, mean localisation error {:.3} mm",
            regime.len(),
            all4,
            mean(&dice),
            mean(&loc)
        );
    }
    println!("wrote {} records to {}", out.records.len(), a.out.display());
    Ok(())
}

pub fn bench(cfg: &AppConfig, a: &BenchArgs) -> Result<(), CliError> {
    let screen = load_screen(cfg, a.screen.as_deref())?;
    let pose = sample_pose(a.distance, a.angle, 0.0)?;
    let r = benchmark_latency(&screen, &cfg.scene_config(), &pose, &cfg.eval_config(true), a.frames)?;
    println!("frames     {}", r.frames);
    println!("mean_ms    {:.3}", r.mean_ms);
    println!("std_ms     {:.3}", r.std_ms);
    println!("median_ms  {:.3}", r.median_ms);
    println!("fps        {:.2}", r.fps);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_list("800:3000:200").unwrap().len(), 12);
        assert_eq!(parse_list("-75:75:5").unwrap().first(), Some(&-75.0));
        assert_eq!(parse_list("-75:75:5").unwrap().last(), Some(&75.0));
        assert_eq!(parse_list("1, 2.5,4").unwrap(), vec![1.0, 2.5, 4.0]);
        assert_eq!(parse_list("7").unwrap(), vec![7.0]);
        assert!(parse_list("1:2").is_err());
        assert!(parse_list("3:1:1").is_err());
        assert!(parse_list("0:1:0").is_err());
        assert!(parse_list("a,b").is_err());
    }

    #[test]
    fn grid_file() {
        let g = parse_grid("grid.distances_mm = 800,1600 # two\ngrid.trials_per_cell = 3\ngrid.base_seed = 9\n", "g").unwrap();
        assert_eq!(g.distances_mm, vec![800.0, 1600.0]);
        assert_eq!((g.trials_per_cell, g.base_seed), (3, 9));
        assert_eq!(g.angles_deg, SweepGrid::default().angles_deg);
        assert!(parse_grid("grid.distance = 3", "g").is_err());
        assert!(parse_grid("grid.trials_per_cell = x", "g").is_err());
    }

    #[test]
    fn summary_next_to_csv() {
        assert_eq!(summary_path(Path::new("out/sweep.csv")), PathBuf::from("out/sweep.summary.json"));
    }
}
