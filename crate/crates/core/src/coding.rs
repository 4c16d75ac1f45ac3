//! Code-length accounting for the union-bound complexity term.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeLength {
    pub raw_bits: f64,
    pub prefix_bits: f64,
    pub nats: f64,
}

impl CodeLength {
    fn from_bits(raw_bits: f64, prefix_bits: f64) -> Self {
        Self { raw_bits, prefix_bits, nats: prefix_bits * LN_2 }
    }
}

/// Prefix-free length `L + 2 log₂ L + 1` for a code of raw length `L ≥ 1`.
pub fn prefix_code_length(raw_bits: f64) -> Result<CodeLength> {
    if !(raw_bits >= 1.0) || !raw_bits.is_finite() {
        return Err(Error::domain(format!("raw code length must be ≥ 1 bit, got {raw_bits}")));
    }
    Ok(CodeLength::from_bits(raw_bits, prefix_bits(raw_bits)))
}

fn prefix_bits(raw_bits: f64) -> f64 {
    raw_bits + 2.0 * raw_bits.log2() + 1.0
}

/// `b·N` bits for a model with a known parameter count and bit width.
///
/// The length is fixed ahead of time, so no prefix surcharge applies.
pub fn quantized_code_length(num_params: u64, bits_per_param: f64) -> Result<CodeLength> {
    if num_params == 0 {
        return Err(Error::domain("model must have at least one parameter"));
    }
    if !(bits_per_param > 0.0) || !bits_per_param.is_finite() {
        return Err(Error::domain(format!("bits per parameter must be positive, got {bits_per_param}")));
    }
    let bits = num_params as f64 * bits_per_param;
    Ok(CodeLength::from_bits(bits, bits))
}

/// `(L + ln(|K|/δ)) / n`.
pub fn union_complexity(code_nats: f64, n: u64, grid_size: usize, delta_fail: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    if grid_size == 0 {
        return Err(Error::EmptyGrid);
    }
    if !(delta_fail > 0.0 && delta_fail <= 1.0) {
        return Err(Error::domain(format!("δ must lie in (0, 1], got {delta_fail}")));
    }
    if !(code_nats >= 0.0) || !code_nats.is_finite() {
        return Err(Error::domain(format!("code length must be finite and non-negative, got {code_nats}")));
    }
    Ok((code_nats + (grid_size as f64 / delta_fail).ln()) / n as f64)
}

/// Partial Kraft sum `Σ_{L=1}^{depth} 2^L · 2^{-ℓ(L)}` over all codes of raw
/// length `L`, where `ℓ` is the prefix-free conversion. Each term is `1/(2L²)`.
pub fn kraft_partial_sum(depth: u64) -> f64 {
    let mut acc = crate::numeric::CompensatedSum::new();
    for l in 1..=depth {
        let lf = l as f64;
        // 2^L · 2^{-ℓ(L)} = 2^{L - ℓ(L)}
        acc.add((lf - prefix_bits(lf)).exp2());
    }
    acc.value()
}
