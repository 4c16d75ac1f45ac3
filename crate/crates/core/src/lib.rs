//! Non-vacuous token-level generalization bounds for quantized language
//! models, with the supporting numerics: martingale concentration,
//! prediction smoothing, code-length accounting, spectral trace estimation
//! and scaling-law analysis.

pub mod assembly;
pub mod coding;
pub mod concentration;
pub mod error;
pub mod harness;
pub mod io;
pub mod numeric;
pub mod prequential;
pub mod presets;
pub mod scaling;
pub mod smoothing;
pub mod spectral;

pub use error::{Error, Result};
