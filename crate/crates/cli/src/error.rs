use std::fmt;

use screentrack::detect::DetectError;
use screentrack::eval::EvalError;
use screentrack::geometry::GeometryError;
use screentrack::image::ImageError;
use screentrack::rectify::RectifyError;
use screentrack::simulate::SimulateError;

use crate::config::ConfigError;

/// Failure of a command, tagged with its exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, configuration or input documents (exit 2).
    Usage(String),
    /// The pipeline could not produce a result (exit 3).
    Processing(String),
    /// Reading or writing a file failed (exit 4).
    Io(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Processing(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Processing(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ImageError> for CliError {
    fn from(e: ImageError) -> Self {
        match e {
            ImageError::Io { .. } | ImageError::Decode { .. } | ImageError::Encode { .. } => {
                CliError::Io(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<DetectError> for CliError {
    fn from(e: DetectError) -> Self {
        match e {
            DetectError::Io { .. } => CliError::Io(e.to_string()),
            DetectError::Parse { .. } | DetectError::InvalidSpec(_) | DetectError::InvalidFrame(_) => {
                CliError::Usage(e.to_string())
            }
            DetectError::IncompleteDetection { .. } | DetectError::AmbiguousDetection(_) => {
                CliError::Processing(e.to_string())
            }
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        CliError::Processing(e.to_string())
    }
}

impl From<RectifyError> for CliError {
    fn from(e: RectifyError) -> Self {
        match e {
            RectifyError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Processing(e.to_string()),
        }
    }
}

impl From<SimulateError> for CliError {
    fn from(e: SimulateError) -> Self {
        match e {
            SimulateError::Geometry(_) => CliError::Processing(e.to_string()),
            SimulateError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidInput(_) => CliError::Usage(e.to_string()),
            EvalError::Detect(d) => d.into(),
            EvalError::Simulate(s) => s.into(),
            _ => CliError::Processing(e.to_string()),
        }
    }
}
