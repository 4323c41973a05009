//! Mask-estimation network.

pub mod bn;
pub mod complexity;
pub mod features;
pub mod file;
pub mod lstm;
pub mod net;
pub mod params;

pub use complexity::{complexity_report, ComplexityReport, ComplexityRow};
pub use features::{extract_features, Features};
pub use file::{read_weights, write_weights};
pub use net::{cross_entropy, mask_net_forward};
pub use params::{Arch, MaskNetParams};
