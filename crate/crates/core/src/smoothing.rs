//! Prediction smoothing: mixing a categorical predictor with the uniform
//! distribution over `V` symbols caps the worst-case loss at `ln(V/α)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities below `e^-745` underflow to zero in `f64`.
const UNDERFLOW_NLL: f64 = 745.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSpec {
    alpha: f64,
    vocab: u64,
    worst_case_nats: f64,
}

impl SmoothingSpec {
    pub fn new(alpha: f64, vocab: u64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if vocab < 2 {
            return Err(Error::domain(format!("vocabulary must have at least 2 symbols, got {vocab}")));
        }
        Ok(Self { alpha, vocab, worst_case_nats: (vocab as f64 / alpha).ln() })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocab(&self) -> u64 {
        self.vocab
    }

    /// `Δ_s = ln(V/α)`.
    pub fn worst_case_nats(&self) -> f64 {
        self.worst_case_nats
    }

    /// Smoothed probability `(1-α)p + α/V`.
    pub fn smooth_prob(&self, p: f64) -> f64 {
        (1.0 - self.alpha) * p + self.alpha / self.vocab as f64
    }
}

/// `α = V·C / ((V-1)(1+C))`, the minimizer of the smoothing overhead.
pub fn optimal_alpha(complexity_c: f64, vocab: u64) -> Result<SmoothingSpec> {
    if !(complexity_c > 0.0) || !complexity_c.is_finite() {
        return Err(Error::domain(format!("complexity must be positive, got {complexity_c}")));
    }
    if vocab < 2 {
        return Err(Error::domain(format!("vocabulary must have at least 2 symbols, got {vocab}")));
    }
    let v = vocab as f64;
    let alpha = v * complexity_c / ((v - 1.0) * (1.0 + complexity_c));
    if alpha >= 1.0 {
        return Err(Error::domain(format!(
            "optimal alpha = {alpha} ≥ 1: complexity {complexity_c} too large for V = {vocab}"
        )));
    }
    SmoothingSpec::new(alpha, vocab)
}

/// `-ln((1-α)e^{-nll} + α/V)`. Accepts `+∞` (probability zero).
pub fn smooth_nll(nll: f64, spec: &SmoothingSpec) -> f64 {
    if nll.is_infinite() || nll > UNDERFLOW_NLL {
        return spec.worst_case_nats;
    }
    let value = -spec.smooth_prob((-nll).exp()).ln();
    value.min(spec.worst_case_nats)
}

/// `R̂ + C·ln V + √(2C)`: upper bound on `R̂_s + C·Δ_s` at the optimal α.
pub fn smoothing_guarantee(empirical_risk: f64, complexity_c: f64, vocab: u64) -> Result<f64> {
    Ok(empirical_risk + smoothing_overhead(complexity_c, vocab)?)
}

/// `C·ln V + √(2C)`.
pub fn smoothing_overhead(complexity_c: f64, vocab: u64) -> Result<f64> {
    if !(complexity_c > 0.0) {
        return Err(Error::domain(format!("complexity must be positive, got {complexity_c}")));
    }
    if vocab < 2 {
        return Err(Error::domain("vocabulary must have at least 2 symbols"));
    }
    Ok(complexity_c * (vocab as f64).ln() + (2.0 * complexity_c).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn alpha_examples() {
        let s = optimal_alpha(1.0 / 9.0, 50_000).unwrap();
        assert!((s.alpha() - 0.100002).abs() < 1e-6);
        assert!((s.alpha() - 50_000.0 / 499_990.0).abs() < 1e-15);
        assert!((s.worst_case_nats() - (50_000.0 / s.alpha()).ln()).abs() < 1e-15);
        assert!(optimal_alpha(1e-12, 50_000).unwrap().alpha() < 2e-12);
        assert!(optimal_alpha(1.0, 2).is_err());
        assert!(optimal_alpha(0.0, 10).is_err());
    }

    #[test]
    fn alpha_approximates_c_over_one_plus_c() {
        let c = 0.2;
        let s = optimal_alpha(c, 1_000_000).unwrap();
        assert!((s.alpha() - c / (1.0 + c)).abs() < 1e-6);
    }

    #[test]
    fn smooth_nll_examples() {
        let spec = SmoothingSpec::new(0.1, 50_000).unwrap();
        assert!((smooth_nll(0.0, &spec) - 0.105359).abs() < 1e-6);
        assert_eq!(smooth_nll(f64::INFINITY, &spec), spec.worst_case_nats());
        assert_eq!(smooth_nll(800.0, &spec), spec.worst_case_nats());
        let tiny = SmoothingSpec::new(1e-12, 50_000).unwrap();
        assert!((smooth_nll(2.0, &tiny) - 2.0).abs() < 1e-10);
    }

    #[test]
    fn overhead_example() {
        let o = smoothing_overhead(1.0 / 9.0, 50_000).unwrap();
        assert!((o - 1.6737).abs() < 1e-4);
        assert!(smoothing_overhead(1e-14, 50_000).unwrap() < 1e-6);
    }

    #[test]
    fn scalar_inequality_on_dense_grid() {
        // (1+x)ln(1+x) - x ln x ≤ √(2x) on (0, 10³]
        let mut x: f64 = 1e-9;
        while x <= 1e3 {
            let lhs = (1.0 + x) * x.ln_1p() - x * x.ln();
            assert!(lhs <= (2.0 * x).sqrt(), "x = {x}");
            x *= 1.001;
        }
    }

    #[test]
    fn guarantee_holds_on_random_loss_lists() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let vocab = rng.random_range(2..100_000u64);
            let c = 10f64.powf(rng.random_range(-6.0..0.0));
            let Ok(spec) = optimal_alpha(c, vocab) else { continue };
            let n = rng.random_range(1..50);
            let losses: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..30.0)).collect();
            let r_h = losses.iter().sum::<f64>() / n as f64;
            let r_s = losses.iter().map(|&l| smooth_nll(l, &spec)).sum::<f64>() / n as f64;
            let lhs = r_s + c * spec.worst_case_nats();
            assert!(lhs - smoothing_guarantee(r_h, c, vocab).unwrap() <= 1e-9);
        }
    }

    proptest! {
        #[test]
        fn smooth_nll_monotone_and_capped(a in 0.0f64..50.0, b in 0.0f64..50.0, alpha in 1e-6f64..0.99) {
            let spec = SmoothingSpec::new(alpha, 1000).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(smooth_nll(lo, &spec) <= smooth_nll(hi, &spec));
            prop_assert!(smooth_nll(hi, &spec) <= spec.worst_case_nats());
            let slack = -(1.0 - alpha + alpha / 1000.0).ln();
            prop_assert!(smooth_nll(lo, &spec) <= lo + slack + 1e-12);
        }
    }
}
