use std::io;

use thiserror::Error;

/// Errors produced anywhere in the enhancement engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("empty spectrogram: T = 0")]
    EmptySpectrogram,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("position {0:?} lies outside the room")]
    OutsideRoom([f64; 3]),
    #[error("trajectory covers {covered:.3} s but the signal lasts {needed:.3} s")]
    TrajectoryTooShort { covered: f64, needed: f64 },
    #[error("unknown scenario id {0}")]
    UnknownScenario(u32),
    #[error("degenerate PSD")]
    DegeneratePsd,
    #[error("singular matrix")]
    SingularMatrix,
    #[error("degenerate mask coverage")]
    DegenerateMaskCoverage,
    #[error("precision mismatch: expected {expected}, found {found}")]
    PrecisionMismatch { expected: String, found: String },
    #[error("non-finite input")]
    NonFinite,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
