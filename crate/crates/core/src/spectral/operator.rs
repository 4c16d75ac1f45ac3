use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A symmetric linear map known through its action on vectors.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;

    /// `out = H·v`.
    fn apply(&self, v: &[f64], out: &mut [f64]);

    /// Apply to `block.len() / dim` column vectors stored column-major.
    fn apply_block(&self, block: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for (v, o) in block.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
            self.apply(v, o);
        }
    }

    /// Explicit dense form, when one is available.
    fn dense(&self) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    matrix: DMatrix<f64>,
}

/// Relative asymmetry tolerated when wrapping a dense matrix.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::domain(format!(
                "operator must be square, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.nrows() == 0 {
            return Err(Error::domain("operator must have positive dimension"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        let n = matrix.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_TOLERANCE * scale {
                    return Err(Error::domain(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }
}

impl SymmetricOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.apply_block(v, out);
    }

    fn apply_block(&self, block: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let k = block.len() / n;
        let input = DMatrixView::from_slice(block, n, k);
        let mut output = DMatrixViewMut::from_slice(out, n, k);
        output.gemm(1.0, &self.matrix, &input, 0.0);
    }

    fn dense(&self) -> Option<DMatrix<f64>> {
        Some(self.matrix.clone())
    }
}

/// Matrix-free operator backed by a matvec callback.
pub struct FnOperator<F> {
    dim: usize,
    matvec: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(dim: usize, matvec: F) -> Self {
        Self { dim, matvec }
    }
}

impl<F: Fn(&[f64], &mut [f64])> SymmetricOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        (self.matvec)(v, out)
    }
}

/// Largest relative asymmetry `|⟨u,Hv⟩ − ⟨Hu,v⟩| / (‖u‖‖Hv‖ + ‖Hu‖‖v‖)`
/// over random Gaussian probe pairs.
pub fn symmetry_defect<O: SymmetricOperator + ?Sized>(op: &O, pairs: usize, seed: u64) -> f64 {
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let (mut hu, mut hv) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..pairs {
        let u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        op.apply(&u, &mut hu);
        op.apply(&v, &mut hv);
        let scale = norm(&u) * norm(&hv) + norm(&hu) * norm(&v);
        if scale > 0.0 {
            worst = worst.max((dot(&u, &hv) - dot(&hu, &v)).abs() / scale);
        }
    }
    worst
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_rejects_asymmetric_and_applies_blocks() {
        assert!(DenseOperator::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])).is_err());
        assert!(DenseOperator::new(DMatrix::zeros(2, 3)).is_err());
        let op = DenseOperator::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0])).unwrap();
        let mut out = vec![0.0; 4];
        op.apply_block(&[1.0, 0.0, 0.0, 1.0], &mut out);
        assert_eq!(out, vec![2.0, 1.0, 1.0, 3.0]);
        assert!(symmetry_defect(&op, 5, 1) < 1e-14);
    }

    #[test]
    fn callback_operator_default_block() {
        let op = FnOperator::new(3, |v: &[f64], out: &mut [f64]| {
            for (o, x) in out.iter_mut().zip(v) {
                *o = 2.0 * x;
            }
        });
        let mut out = vec![0.0; 6];
        op.apply_block(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &mut out);
        assert_eq!(out, vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0]);
        assert!(op.dense().is_none());
        let skew = FnOperator::new(2, |v: &[f64], out: &mut [f64]| {
            out[0] = v[1];
            out[1] = -v[0];
        });
        assert!(symmetry_defect(&skew, 5, 2) > 0.1);
    }
}
