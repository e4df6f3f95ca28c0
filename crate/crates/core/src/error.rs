use std::io;

use thiserror::Error;

/// Errors raised by the simulator stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("frame too small for MS-SSIM: need at least {min}x{min} pixels, got {width}x{height}")]
    FrameTooSmall { min: usize, width: usize, height: usize },

    #[error("corrupt raw video: {0}")]
    CorruptVideo(String),

    #[error("unrecoverable bitstream header: {0}")]
    BadHeader(String),

    #[error("timestep {t} out of range (scene has {timesteps})")]
    TimeOutOfRange { t: usize, timesteps: usize },

    #[error("point behind camera (depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("pixel ({x}, {y}) at t={t} is not covered by any Gaussian")]
    NoCoverage { x: f64, y: f64, t: usize },

    #[error("scene fit diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
