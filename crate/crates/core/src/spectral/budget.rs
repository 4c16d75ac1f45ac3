use crate::error::{Error, Result};

/// Unit roundoff of IEEE binary16 (10 stored significand bits).
pub const FP16_UNIT_ROUNDOFF: f64 = 4.8828125e-4;

/// A half-precision epsilon quoted in some Hessian-spectrum analyses. It is
/// far below what binary16 can represent; kept selectable for comparison.
pub const QUOTED_HALF_PRECISION_EPS: f64 = 1e-7;

/// Bits per parameter for quantization budget `Q` on the `LᵀDL` proxy loss:
///
/// `log₂(Tr(H^{1/2})/√(N·Q)) + ½·log₂ ln(2N²/δ) − ½`
///
/// The value may be negative and is returned unclamped.
pub fn required_bits(trace_sqrt: f64, num_params: u64, quant_budget: f64, delta_fail: f64) -> Result<f64> {
    if !(trace_sqrt > 0.0) || !(quant_budget > 0.0) || num_params == 0 {
        return Err(Error::domain("required_bits needs Tr(√H) > 0, Q > 0 and N ≥ 1"));
    }
    if !(delta_fail > 0.0 && delta_fail < 1.0) {
        return Err(Error::domain(format!("δ must lie in (0, 1), got {delta_fail}")));
    }
    let n = num_params as f64;
    let log_term = (2.0 * n * n / delta_fail).ln();
    Ok((trace_sqrt / (n * quant_budget).sqrt()).log2() + 0.5 * log_term.log2() - 0.5)
}

/// `√(P·ε²·Σ_k a_k² / (N·(1 + ε²)))` for a sample of `N` squared Hessian
/// entries: the spectral width attributable to finite-precision noise.
pub fn precision_noise_width(diag_squares: &[f64], total_params: u64, eps_mantissa: f64) -> Result<f64> {
    if diag_squares.is_empty() {
        return Err(Error::domain("precision noise width needs a non-empty sample"));
    }
    if total_params == 0 {
        return Err(Error::domain("total parameter count must be at least 1"));
    }
    if !(eps_mantissa >= 0.0) || !eps_mantissa.is_finite() {
        return Err(Error::domain(format!("ε must be finite and non-negative, got {eps_mantissa}")));
    }
    if diag_squares.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::domain("squared entries must be finite and non-negative"));
    }
    let n = diag_squares.len() as f64;
    let sum: f64 = diag_squares.iter().sum();
    let e2 = eps_mantissa * eps_mantissa;
    Ok((total_params as f64 * e2 * sum / (n * (1.0 + e2))).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn required_bits_examples() {
        let b = required_bits(500.0, 10_000, 0.1, 0.05).unwrap();
        assert!((b - 5.716).abs() < 1e-3, "{b}");
        let (n, q, delta) = (4096u64, 0.5, 0.01);
        let balanced = required_bits((n as f64 * q).sqrt(), n, q, delta).unwrap();
        let expected = 0.5 * (2.0 * (n as f64).powi(2) / delta).ln().log2() - 0.5;
        assert!((balanced - expected).abs() < 1e-12);
    }

    #[test]
    fn required_bits_scaling_in_n() {
        // Tr(√H) ∝ √N: only the log-log term moves
        let f = |n: u64| required_bits(3.0 * (n as f64).sqrt(), n, 0.1, 0.05).unwrap();
        let g = |n: u64| 0.5 * (2.0 * (n as f64).powi(2) / 0.05).ln().log2();
        assert!(((f(1 << 20) - g(1 << 20)) - (f(1 << 10) - g(1 << 10))).abs() < 1e-12);
        // Tr(√H) ∝ N: grows by ½·log₂ of the ratio
        let h = |n: u64| required_bits(3.0 * n as f64, n, 0.1, 0.05).unwrap() - g(n);
        assert!((h(1 << 20) - h(1 << 10) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn noise_width_examples() {
        assert_eq!(precision_noise_width(&[1.0, 4.0], 10, 0.0).unwrap(), 0.0);
        let eps = 0.01;
        let w = precision_noise_width(&[1.0; 50], 1, eps).unwrap();
        assert!((w - (eps * eps / (50.0 * (1.0 + eps * eps))).sqrt() * 50f64.sqrt()).abs() < 1e-15);
        assert!((w / eps - 1.0).abs() < 1e-4);
        let p_eq_n = precision_noise_width(&[1.0; 50], 50, eps).unwrap();
        assert!((p_eq_n - (50.0 * eps * eps / (1.0 + eps * eps)).sqrt()).abs() < 1e-15);
        assert!(precision_noise_width(&[], 1, eps).is_err());
    }
}
