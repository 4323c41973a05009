pub mod beamform;
pub mod binkernel;
pub mod config;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod quant;
pub mod room;
pub mod stft;
pub mod train;
pub mod wav;

pub use error::{Error, Result};
