//! Reference constants: default bound settings, the fitted scaling curves
//! used as planted truth in tests, and a published Chinchilla parameter
//! set.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::scaling::{ChinchillaParams, GrowthLawFit, PowerLawFit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Defaults {
    pub delta_fail: f64,
    pub bits_per_param: f64,
    pub grid_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkedExample {
    pub vocab: u64,
    pub bits_per_param: f64,
    /// `N/D` on the compute-optimal frontier.
    pub params_per_token: f64,
    pub complexity: f64,
    pub sigma: f64,
    pub quant_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetPowerLaw {
    pub offset: f64,
    pub coefficient: f64,
    pub exponent: f64,
}

impl OffsetPowerLaw {
    /// `offset + coefficient·x^{−exponent}`.
    pub fn eval(&self, x: f64) -> f64 {
        self.offset + self.coefficient * x.powf(-self.exponent)
    }

    pub fn as_fit(&self) -> PowerLawFit {
        PowerLawFit {
            offset: self.offset,
            coefficient: self.coefficient,
            exponent: self.exponent,
            rms_residual: 0.0,
            stderr_exponent: 0.0,
            degenerate: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Presets {
    pub defaults: Defaults,
    pub worked_example: WorkedExample,
    /// Σ as a function of model size.
    pub loss_variation_fit: OffsetPowerLaw,
    /// Prequential `K(h)` in bits as a function of model size.
    pub prequential_growth_fit: GrowthLawFit,
    /// Exponent of the data term in the scaling law.
    pub data_exponent: f64,
    pub chinchilla_replication: ChinchillaParams,
}

pub fn presets() -> &'static Presets {
    static PRESETS: OnceLock<Presets> = OnceLock::new();
    PRESETS.get_or_init(|| serde_json::from_str(include_str!("presets.json")).expect("bundled presets parse"))
}
