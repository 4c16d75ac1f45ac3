//! Hutchinson trace estimation: `E[uᵀHu] = Tr H` for zero-mean,
//! unit-variance probes, with `Var[uᵀHu] ≤ (2 + m₄)·Tr(H²)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::operator::{dot, SymmetricOperator};
use super::slq::ProbeKind;
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HutchinsonEstimate {
    pub estimate: f64,
    /// Unbiased sample variance of the per-probe values `uᵀHu`.
    pub empirical_variance: f64,
    pub num_probes: usize,
    pub fourth_moment: f64,
}

impl HutchinsonEstimate {
    /// Empirical `std/mean` of a single probe.
    pub fn single_probe_snr_inverse(&self) -> f64 {
        self.empirical_variance.sqrt() / self.estimate.abs()
    }
}

const PROBES_PER_BLOCK: usize = 64;

pub fn hutchinson_trace<O: SymmetricOperator + ?Sized>(
    op: &O,
    num_probes: usize,
    probe: ProbeKind,
    seed: u64,
) -> Result<HutchinsonEstimate> {
    if num_probes == 0 {
        return Err(Error::domain("Hutchinson estimation needs at least one probe"));
    }
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(num_probes);
    let (mut block, mut image) = (Vec::new(), Vec::new());
    while values.len() < num_probes {
        let k = PROBES_PER_BLOCK.min(num_probes - values.len());
        block.resize(n * k, 0.0);
        image.resize(n * k, 0.0);
        probe.fill(&mut rng, &mut block);
        op.apply_block(&block, &mut image);
        values.extend(block.chunks_exact(n).zip(image.chunks_exact(n)).map(|(u, hu)| dot(u, hu)));
    }
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / num_probes as f64;
    let empirical_variance = if num_probes > 1 {
        values.iter().map(|v| (v - mean).powi(2)).collect::<CompensatedSum>().value() / (num_probes - 1) as f64
    } else {
        0.0
    };
    Ok(HutchinsonEstimate { estimate: mean, empirical_variance, num_probes, fourth_moment: probe.fourth_moment() })
}

/// `(2 + m₄)·Tr(H²)`.
pub fn hutchinson_variance_bound(trace_h_squared: f64, probe: ProbeKind) -> f64 {
    (2.0 + probe.fourth_moment()) * trace_h_squared
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::operator::DenseOperator;
    use crate::spectral::random::random_symmetric;
    use nalgebra::DMatrix;

    #[test]
    fn identity_is_exact_for_rademacher() {
        let op = DenseOperator::new(DMatrix::identity(100, 100)).unwrap();
        let e = hutchinson_trace(&op, 50, ProbeKind::Rademacher, 1).unwrap();
        assert_eq!(e.estimate, 100.0);
        assert_eq!(e.empirical_variance, 0.0);
        assert_eq!(e.fourth_moment, 1.0);
    }

    #[test]
    fn estimate_within_three_sigma() {
        let mut inside = 0;
        for seed in 0..100 {
            let h = random_symmetric(50, seed);
            let exact = h.trace();
            let tr_h2 = (&h * &h).trace();
            let op = DenseOperator::new(h).unwrap();
            let n_v = 200;
            let e = hutchinson_trace(&op, n_v, ProbeKind::Gaussian, seed + 1000).unwrap();
            let band = 3.0 * (hutchinson_variance_bound(tr_h2, ProbeKind::Gaussian) / n_v as f64).sqrt();
            if (e.estimate - exact).abs() <= band {
                inside += 1;
            }
        }
        assert!(inside >= 99, "{inside}");
    }
}
