//! `key = value` configuration with dotted keys and `#` comments.
//!
//! Every key is optional and falls back to the library defaults; unknown or
//! repeated keys and out-of-range values are rejected at load time.

use std::collections::HashSet;
use std::path::Path;

use screentrack::detect::MarkerSpec;
use screentrack::eval::{EvalConfig, MatchRule};
use screentrack::geometry::{CameraIntrinsics, LmConfig, ScreenModel};
use screentrack::rectify::{FrustumConfig, ThresholdMethod, WarpConfig};
use screentrack::simulate::SceneConfig;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}:{line}: {message}")]
    Syntax { origin: String, line: usize, message: String },
    #[error("{origin}: {message}")]
    Invalid { origin: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppConfig {
    pub screen: ScreenModel,
    pub camera: CameraIntrinsics,
    pub markers: MarkerSpec,
    pub frustum: FrustumConfig,
    pub warp_fill: u8,
    pub lm: LmConfig,
    pub frame_cols: u32,
    pub frame_rows: u32,
    pub marker_size_mm: f64,
    pub background: u8,
}

impl Default for AppConfig {
    fn default() -> Self {
        let scene = SceneConfig::default();
        AppConfig {
            screen: scene.screen,
            camera: scene.k,
            markers: MarkerSpec::default(),
            frustum: FrustumConfig::default(),
            warp_fill: 0,
            lm: LmConfig::default(),
            frame_cols: scene.frame_cols,
            frame_rows: scene.frame_rows,
            marker_size_mm: scene.marker_size_mm,
            background: scene.background,
        }
    }
}

const CORNER_KEYS: [&str; 4] = ["tl", "tr", "br", "bl"];

fn parse_num<T: std::str::FromStr>(value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse `{value}`"))
}

impl AppConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn load_optional(path: Option<&Path>) -> Result<Self, ConfigError> {
        path.map_or_else(|| Ok(AppConfig::default()), Self::load)
    }

    /// Parses configuration text; `origin` labels error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut cfg = AppConfig::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let syntax = |message: String| ConfigError::Syntax { origin: origin.into(), line: i + 1, message };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(syntax(format!("expected `key = value`, got `{line}`")));
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(syntax(format!("duplicate key `{key}`")));
            }
            cfg.set(key, value).map_err(|m| syntax(format!("{key}: {m}")))?;
        }
        cfg.validate().map_err(|message| ConfigError::Invalid { origin: origin.into(), message })?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "screen.width_mm" => self.screen.width_mm = parse_num(value)?,
            "screen.height_mm" => self.screen.height_mm = parse_num(value)?,
            "screen.cols_px" => self.screen.cols_px = parse_num(value)?,
            "screen.rows_px" => self.screen.rows_px = parse_num(value)?,
            "camera.fx" => self.camera.fx = parse_num(value)?,
            "camera.fy" => self.camera.fy = parse_num(value)?,
            "camera.cx" => self.camera.cx = parse_num(value)?,
            "camera.cy" => self.camera.cy = parse_num(value)?,
            "marker.sat_min" => self.markers.sat_min = parse_num(value)?,
            "marker.val_min" => self.markers.val_min = parse_num(value)?,
            "marker.min_area_px" => self.markers.min_area_px = parse_num(value)?,
            "frustum.method" => {
                self.frustum.method = match value {
                    "otsu" => ThresholdMethod::Otsu,
                    "fixed" => ThresholdMethod::Fixed,
                    _ => return Err(format!("expected `otsu` or `fixed`, got `{value}`")),
                }
            }
            "frustum.threshold" => self.frustum.threshold = parse_num(value)?,
            "warp.fill" => self.warp_fill = parse_num(value)?,
            "lm.lambda_init" => self.lm.lambda_init = parse_num(value)?,
            "lm.max_iters" => self.lm.max_iters = parse_num(value)?,
            "lm.cost_tol" => self.lm.cost_tol = parse_num(value)?,
            "lm.grad_tol" => self.lm.grad_tol = parse_num(value)?,
            "scene.frame_cols" => self.frame_cols = parse_num(value)?,
            "scene.frame_rows" => self.frame_rows = parse_num(value)?,
            "scene.marker_size_mm" => self.marker_size_mm = parse_num(value)?,
            "scene.background" => self.background = parse_num(value)?,
            _ => {
                let corner = key
                    .strip_prefix("marker.")
                    .and_then(|rest| rest.split_once('.'))
                    .and_then(|(c, field)| CORNER_KEYS.iter().position(|k| *k == c).map(|i| (i, field)));
                match corner {
                    Some((i, "hue_lo")) => self.markers.hues[i].lo = parse_num(value)?,
                    Some((i, "hue_hi")) => self.markers.hues[i].hi = parse_num(value)?,
                    _ => return Err("unknown key".into()),
                }
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), String> {
        self.screen.validate().map_err(|e| e.to_string())?;
        self.camera.validate().map_err(|e| e.to_string())?;
        self.markers.validate().map_err(|e| e.to_string())?;
        self.lm.validate().map_err(|e| e.to_string())?;
        self.scene_config().validate().map_err(|e| e.to_string())
    }

    pub fn scene_config(&self) -> SceneConfig {
        SceneConfig {
            screen: self.screen,
            k: self.camera,
            frame_cols: self.frame_cols,
            frame_rows: self.frame_rows,
            marker_size_mm: self.marker_size_mm,
            background: self.background,
            ..SceneConfig::default()
        }
    }

    pub fn warp_config(&self) -> WarpConfig {
        WarpConfig { fill: self.warp_fill, ..WarpConfig::for_screen(&self.screen) }
    }

    pub fn eval_config(&self, timing: bool) -> EvalConfig {
        EvalConfig {
            screen: self.screen,
            markers: self.markers.clone(),
            warp: self.warp_config(),
            frustum: self.frustum,
            rule: MatchRule::for_frame_width(self.frame_cols),
            timing,
        }
    }
}
