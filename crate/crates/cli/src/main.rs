mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use screentrack::detect::CornerId;

#[derive(Parser)]
#[command(name = "screentrack", version, about = "Track a screen through four corner markers and rectify its content")]
struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect the four corner markers in a frame.
    Detect(DetectArgs),
    /// Warp a frame back onto the screen raster.
    Rectify(RectifyArgs),
    /// Estimate the camera pose from detected corners.
    Pose(PoseArgs),
    /// Render a synthetic frame with ground truth.
    Simulate(SimulateArgs),
    /// Evaluate the pipeline over a distance x angle grid.
    Sweep(SweepArgs),
    /// Time detection and rectification.
    Bench(BenchArgs),
}

#[derive(Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct RectifyArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Detection JSON to take the corners from.
    #[arg(long, conflicts_with = "auto", required_unless_present = "auto")]
    pub detections: Option<PathBuf>,
    /// Detect the corners in the input frame.
    #[arg(long)]
    pub auto: bool,
    /// Frame name inside the detection file; defaults to the first one.
    #[arg(long)]
    pub frame: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub homography_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct PoseArgs {
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub frame: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_corner(s: &str) -> Result<CornerId, String> {
    s.trim().parse()
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
pub struct SimulateArgs {
    /// Screen image; the built-in ultrasound-like screen when omitted.
    #[arg(long)]
    pub screen: Option<PathBuf>,
    /// Also write the screen image that was rendered.
    #[arg(long)]
    pub screen_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1000.0)]
    pub distance: f64,
    #[arg(long, default_value_t = 0.0)]
    pub angle: f64,
    #[arg(long, default_value_t = 0.0)]
    pub roll: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub reflection: f64,
    /// Corner ids to hide, e.g. `TL,BR`.
    #[arg(long, value_delimiter = ',', value_parser = parse_corner)]
    pub occlude: Vec<CornerId>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub gt_out: Option<PathBuf>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
pub struct SweepArgs {
    #[arg(long)]
    pub screen: Option<PathBuf>,
    /// Grid file with `grid.*` keys; flags below override it.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Comma list or `start:stop:step`.
    #[arg(long)]
    pub distances: Option<String>,
    #[arg(long)]
    pub angles: Option<String>,
    #[arg(long)]
    pub trials: Option<u32>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub reflection: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Leave latency empty so that reruns produce identical files.
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-cell summary; defaults to `<out>.summary.json`.
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 100)]
    pub frames: usize,
    #[arg(long)]
    pub screen: Option<PathBuf>,
    #[arg(long, default_value_t = 1000.0)]
    pub distance: f64,
    #[arg(long, default_value_t = 0.0)]
    pub angle: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = config::AppConfig::load_optional(cli.config.as_deref()).map_err(error::CliError::from).and_then(|cfg| {
        match &cli.command {
            Command::Detect(a) => commands::detect(&cfg, a),
            Command::Rectify(a) => commands::rectify(&cfg, a),
            Command::Pose(a) => commands::pose(&cfg, a),
            Command::Simulate(a) => commands::simulate(&cfg, a),
            Command::Sweep(a) => commands::sweep(&cfg, a),
            Command::Bench(a) => commands::bench(&cfg, a),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
