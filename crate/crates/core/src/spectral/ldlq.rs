//! Scalar LDLQ: sequential rounding with feedback of earlier errors
//! through the `LᵀDL` factorization of the proxy Hessian.
//!
//! With `H = LᵀDL` (`L` unit lower triangular) and
//! `ŵ_k = Q(w_k + Σ_{j<k} L_kj (w_j − ŵ_j))`, the error `e = ŵ − w` solves
//! `L·e = η` for the rounding residuals `η`, so `eᵀHe = ηᵀDη`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::incoherence::incoherence_mu;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantizer {
    Nearest,
    /// Unbiased: rounds up with probability equal to the fractional part.
    Stochastic,
}

/// `H = LᵀDL` with `L` unit lower triangular.
#[derive(Debug, Clone, PartialEq)]
pub struct LdlFactors {
    pub l: DMatrix<f64>,
    pub d: DVector<f64>,
}

/// Pivots below this fraction of the largest diagonal entry are rejected.
const PIVOT_TOLERANCE: f64 = 1e-14;

pub fn ldl_factor(h: &DMatrix<f64>) -> Result<LdlFactors> {
    let n = h.nrows();
    if !h.is_square() || n == 0 {
        return Err(Error::Factorization("matrix must be square and non-empty".into()));
    }
    // LDLᵀ of the index-reversed matrix J·H·J.
    let a = |i: usize, j: usize| h[(n - 1 - i, n - 1 - j)];
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max);
    let mut lr = DMatrix::<f64>::identity(n, n);
    let mut dr = vec![0.0; n];
    for j in 0..n {
        let dj = a(j, j) - (0..j).map(|k| lr[(j, k)] * lr[(j, k)] * dr[k]).sum::<f64>();
        if !(dj > PIVOT_TOLERANCE * scale) {
            return Err(Error::Factorization(format!(
                "non-positive pivot {dj} at index {}: matrix is not positive definite",
                n - 1 - j
            )));
        }
        dr[j] = dj;
        for i in (j + 1)..n {
            let s = a(i, j) - (0..j).map(|k| lr[(i, k)] * lr[(j, k)] * dr[k]).sum::<f64>();
            lr[(i, j)] = s / dj;
        }
    }
    let l = DMatrix::from_fn(n, n, |i, j| lr[(n - 1 - j, n - 1 - i)]);
    let d = DVector::from_fn(n, |i, _| dr[n - 1 - i]);
    Ok(LdlFactors { l, d })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdlqResult {
    pub quantized_weights: Vec<f64>,
    /// `η_k = ŵ_k − (pre-rounding argument)_k`.
    pub rounding_errors: Vec<f64>,
    /// `(ŵ − w)ᵀH(ŵ − w)`.
    pub quad_error: f64,
    /// `μ²σ²/N·Tr(H^{1/2})²`.
    pub bound_value: f64,
    pub incoherence_mu: f64,
    pub sigma_sq: f64,
}

/// Factorization and spectral quantities for repeated quantization under
/// a fixed Hessian.
#[derive(Debug, Clone)]
pub struct LdlqPlan {
    h: DMatrix<f64>,
    factors: LdlFactors,
    trace_sqrt: f64,
    mu: f64,
}

impl LdlqPlan {
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        let factors = ldl_factor(&h)?;
        let eig = SymmetricEigen::new(h.clone());
        let trace_sqrt = eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
        let mu = incoherence_mu(&eig.eigenvectors);
        Ok(Self { h, factors, trace_sqrt, mu })
    }

    pub fn factors(&self) -> &LdlFactors {
        &self.factors
    }

    pub fn trace_sqrt(&self) -> f64 {
        self.trace_sqrt
    }

    pub fn incoherence_mu(&self) -> f64 {
        self.mu
    }

    /// `μ²σ²/N·Tr(H^{1/2})²` for stochastic rounding on a grid of `step`,
    /// where `σ² = step²/4` is the largest per-coordinate variance.
    pub fn bound_value(&self, step: f64) -> f64 {
        let n = self.h.nrows() as f64;
        self.mu * self.mu * rounding_variance(step) / n * self.trace_sqrt * self.trace_sqrt
    }

    pub fn quantize<R: Rng + ?Sized>(
        &self,
        w: &[f64],
        quantizer: Quantizer,
        step: f64,
        rng: &mut R,
    ) -> Result<LdlqResult> {
        let n = self.h.nrows();
        if w.len() != n {
            return Err(Error::LengthMismatch { left: w.len(), right: n });
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::domain(format!("grid step must be positive, got {step}")));
        }
        let l = &self.factors.l;
        let mut w_hat = vec![0.0; n];
        let mut eta = vec![0.0; n];
        for k in 0..n {
            let feedback: f64 = (0..k).map(|j| l[(k, j)] * (w[j] - w_hat[j])).sum();
            let arg = w[k] + feedback;
            w_hat[k] = round_to_grid(arg, step, quantizer, rng);
            eta[k] = w_hat[k] - arg;
        }
        let e = DVector::from_iterator(n, w_hat.iter().zip(w).map(|(a, b)| a - b));
        let quad_error = e.dot(&(&self.h * &e));
        Ok(LdlqResult {
            quantized_weights: w_hat,
            rounding_errors: eta,
            quad_error,
            bound_value: self.bound_value(step),
            incoherence_mu: self.mu,
            sigma_sq: rounding_variance(step),
        })
    }
}

/// `step²/4`; equal to `2^{−2b−2}` for a grid of step `2^{−b}`.
pub fn rounding_variance(step: f64) -> f64 {
    step * step / 4.0
}

pub fn round_to_grid<R: Rng + ?Sized>(x: f64, step: f64, quantizer: Quantizer, rng: &mut R) -> f64 {
    let scaled = x / step;
    match quantizer {
        Quantizer::Nearest => scaled.round() * step,
        Quantizer::Stochastic => {
            let lo = scaled.floor();
            let up = rng.random::<f64>() < scaled - lo;
            (lo + if up { 1.0 } else { 0.0 }) * step
        }
    }
}

pub fn ldlq_quantize<R: Rng + ?Sized>(
    w: &[f64],
    h: &DMatrix<f64>,
    quantizer: Quantizer,
    step: f64,
    rng: &mut R,
) -> Result<LdlqResult> {
    LdlqPlan::new(h.clone())?.quantize(w, quantizer, step, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::random::random_spd;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn factorization_reconstructs() {
        let h = random_spd(12, 20.0, 1);
        let f = ldl_factor(&h).unwrap();
        for i in 0..12 {
            assert_eq!(f.l[(i, i)], 1.0);
            for j in (i + 1)..12 {
                assert_eq!(f.l[(i, j)], 0.0);
            }
        }
        let rebuilt = f.l.transpose() * DMatrix::from_diagonal(&f.d) * &f.l;
        assert!((rebuilt - &h).amax() < 1e-12);
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(ldl_factor(&indefinite), Err(Error::Factorization(_))));
    }

    #[test]
    fn identity_is_independent_rounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = [0.26, -1.4, 3.49];
        let r = ldlq_quantize(&w, &DMatrix::identity(3, 3), Quantizer::Nearest, 0.5, &mut rng).unwrap();
        assert_eq!(r.quantized_weights, vec![0.5, -1.5, 3.5]);
        let direct: f64 = w.iter().zip(&r.quantized_weights).map(|(a, b)| (a - b).powi(2)).sum();
        assert!((r.quad_error - direct).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_recursion() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = [0.3, 0.7];
        let r = ldlq_quantize(&w, &h, Quantizer::Nearest, 1.0, &mut rng).unwrap();
        assert_eq!(r.quantized_weights, vec![0.0, 1.0]);
        assert!((r.quad_error - 0.18).abs() < 1e-12);
        let f = ldl_factor(&h).unwrap();
        assert_eq!(r.quantized_weights[1], (w[1] + f.l[(1, 0)] * (w[0] - r.quantized_weights[0])).round());
        let quad = |a: f64, b: f64| {
            let e = [a - w[0], b - w[1]];
            2.0 * e[0] * e[0] + 2.0 * e[0] * e[1] + 2.0 * e[1] * e[1]
        };
        let mut best = f64::INFINITY;
        for a in -2..=2 {
            for b in -2..=2 {
                best = best.min(quad(a as f64, b as f64));
            }
        }
        assert!(r.quad_error >= best - 1e-12);
        assert!((best - 0.18).abs() < 1e-12);
    }

    #[test]
    fn error_equals_weighted_rounding_residuals() {
        let h = random_spd(16, 50.0, 3);
        let plan = LdlqPlan::new(h).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        let r = plan.quantize(&w, Quantizer::Stochastic, 0.125, &mut rng).unwrap();
        let via_d: f64 = r.rounding_errors.iter().zip(plan.factors().d.iter()).map(|(e, d)| d * e * e).sum();
        assert!((via_d - r.quad_error).abs() < 1e-12 * r.quad_error.max(1e-12));
        assert!(r.quad_error >= 0.0);
    }

    #[test]
    fn stochastic_rounding_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (x, step, draws) = (0.3, 0.25, 20_000);
        let mean = (0..draws).map(|_| round_to_grid(x, step, Quantizer::Stochastic, &mut rng)).sum::<f64>()
            / draws as f64;
        let sd = (0.2 * 0.8f64).sqrt() * step / (draws as f64).sqrt();
        assert!((mean - x).abs() < 3.0 * sd);
        assert_eq!(rounding_variance(2f64.powi(-4)), 2f64.powi(-10));
    }
}
