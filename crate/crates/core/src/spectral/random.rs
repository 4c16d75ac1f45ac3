//! Random test matrices.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`).
pub fn haar_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `Q·diag(eigenvalues)·Qᵀ` with a Haar-random `Q`.
pub fn random_spd_with_spectrum(eigenvalues: &[f64], seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = haar_orthogonal(eigenvalues.len(), &mut rng);
    let scaled = &q * DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues));
    let mut h = scaled * q.transpose();
    symmetrize(&mut h);
    h
}

/// SPD matrix with eigenvalues log-uniform on `[1/κ, 1]`, both endpoints
/// included, so the condition number is exactly `κ`.
pub fn random_spd(n: usize, kappa: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5EED);
    let lo = -kappa.ln();
    let eigenvalues: Vec<f64> = (0..n)
        .map(|i| match i {
            0 => 1.0 / kappa,
            1 => 1.0,
            _ => (lo * rng.random::<f64>()).exp(),
        })
        .collect();
    random_spd_with_spectrum(&eigenvalues, seed)
}

/// Symmetric matrix with iid `N(0, 1)` entries on and above the diagonal.
pub fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = rng.sample(StandardNormal);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

pub(crate) fn symmetrize(h: &mut DMatrix<f64>) {
    let n = h.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
}
