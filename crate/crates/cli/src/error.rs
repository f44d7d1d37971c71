use thiserror::Error;

use tactile_core::distortion::DistortionError;
use tactile_core::fem::FemError;
use tactile_core::frame::FrameError;
use tactile_core::illum::IllumError;
use tactile_core::io::IoError;
use tactile_core::markers::TrackError;
use tactile_core::photostereo::PhotostereoError;
use tactile_core::poisson::PoissonError;
use tactile_core::simulator::SimError;

/// Every failure maps to exactly one exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn input(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<FrameError> for CliError {
    fn from(e: FrameError) -> Self {
        match e {
            FrameError::InvalidGeometry(_) => CliError::Config(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<DistortionError> for CliError {
    fn from(e: DistortionError) -> Self {
        match e {
            DistortionError::InvalidWarp(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<PhotostereoError> for CliError {
    fn from(e: PhotostereoError) -> Self {
        match e {
            PhotostereoError::InvalidConfig(_) | PhotostereoError::InvalidRadius(_) => CliError::Config(e.to_string()),
            PhotostereoError::EmptyTable | PhotostereoError::Poisson(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<PoissonError> for CliError {
    fn from(e: PoissonError) -> Self {
        match e {
            PoissonError::DimensionMismatch(..) => CliError::Input(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<FemError> for CliError {
    fn from(e: FemError) -> Self {
        match e {
            FemError::InvalidMaterial(_) | FemError::InvalidMesh(_) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<TrackError> for CliError {
    fn from(e: TrackError) -> Self {
        match e {
            TrackError::EmptyReference => CliError::Input(e.to_string()),
            TrackError::InvalidMaxDisplacement(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<IllumError> for CliError {
    fn from(e: IllumError) -> Self {
        match e {
            IllumError::ZeroFlux => CliError::Numeric(e.to_string()),
            IllumError::Io(io) => io.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}
