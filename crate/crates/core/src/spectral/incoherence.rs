//! Incoherence processing: a random transform `P` spreads eigenvector mass
//! so that no coordinate dominates, which is what makes rounding errors
//! cheap under `H`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::random::{haar_orthogonal, symmetrize};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    /// iid `N(0, 1/n)` entries; orthogonal only in expectation.
    #[default]
    Gaussian,
    /// Haar-random orthogonal matrix.
    Orthogonal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncoherenceTransform {
    kind: TransformKind,
    p: DMatrix<f64>,
}

impl IncoherenceTransform {
    pub fn sample(dim: usize, kind: TransformKind, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("transform dimension must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = match kind {
            TransformKind::Gaussian => {
                let scale = 1.0 / (dim as f64).sqrt();
                DMatrix::from_fn(dim, dim, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
            }
            TransformKind::Orthogonal => haar_orthogonal(dim, &mut rng),
        };
        Ok(Self { kind, p })
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// `w = Pᵀθ`.
    pub fn transform_weights(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if theta.len() != self.p.nrows() {
            return Err(Error::LengthMismatch { left: theta.len(), right: self.p.nrows() });
        }
        Ok(self.p.tr_mul(theta))
    }

    /// `H_w = PᵀHP`, symmetrized against rounding.
    pub fn transform_hessian(&self, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if h.nrows() != self.p.nrows() || !h.is_square() {
            return Err(Error::LengthMismatch { left: h.nrows(), right: self.p.nrows() });
        }
        let mut hw = self.p.tr_mul(&(h * &self.p));
        symmetrize(&mut hw);
        Ok(hw)
    }
}

/// `μ = √n·max|Q_ij|` of a matrix with unit-norm columns.
pub fn incoherence_mu(q: &DMatrix<f64>) -> f64 {
    (q.nrows() as f64).sqrt() * q.amax()
}

/// Incoherence of the eigenvectors of a symmetric matrix.
pub fn eigenvector_incoherence(h: &DMatrix<f64>) -> f64 {
    incoherence_mu(&SymmetricEigen::new(h.clone()).eigenvectors)
}

/// `√(2·ln(2n²/δ))`: the incoherence a random rotation achieves with
/// probability `1 − δ`.
pub fn incoherence_threshold(dim: usize, delta_fail: f64) -> Result<f64> {
    if !(delta_fail > 0.0 && delta_fail < 1.0) {
        return Err(Error::domain(format!("δ must lie in (0, 1), got {delta_fail}")));
    }
    let n = dim as f64;
    Ok((2.0 * (2.0 * n * n / delta_fail).ln()).sqrt())
}
