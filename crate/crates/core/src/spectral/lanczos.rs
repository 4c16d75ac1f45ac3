//! Lanczos tridiagonalization with full reorthogonalization.
//!
//! Several probes can run in lockstep so that the operator sees one block
//! product per step instead of one matvec per probe.

use serde::{Deserialize, Serialize};

use super::operator::{axpy, dot, norm, SymmetricOperator};
use crate::error::{Error, Result};

/// `β_j ≤ BREAKDOWN_TOLERANCE · ‖T‖` signals an invariant subspace.
pub const BREAKDOWN_TOLERANCE: f64 = 1e-10;

/// Probes must have unit norm to this tolerance.
const UNIT_NORM_TOLERANCE: f64 = 1e-10;

/// Upper bound on the number of floats held in the Krylov basis of a batch.
const BASIS_BUDGET: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanczosResult {
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
    /// The recurrence stopped early on an exact invariant subspace.
    pub breakdown: bool,
}

impl LanczosResult {
    pub fn steps(&self) -> usize {
        self.diag.len()
    }
}

/// `m`-step Lanczos on a unit-norm probe.
pub fn lanczos_tridiag<O: SymmetricOperator + ?Sized>(op: &O, steps: usize, probe: &[f64]) -> Result<LanczosResult> {
    let mut out = lanczos_batch(op, steps, probe)?;
    Ok(out.pop().expect("one probe gives one result"))
}

/// Number of probes per batch for a given dimension and step count.
pub fn batch_size(dim: usize, steps: usize) -> usize {
    (BASIS_BUDGET / (dim * (steps + 1)).max(1)).clamp(1, 128)
}

/// Lanczos on each column of `probes` (column-major, `dim` rows each).
pub fn lanczos_batch<O: SymmetricOperator + ?Sized>(
    op: &O,
    steps: usize,
    probes: &[f64],
) -> Result<Vec<LanczosResult>> {
    let n = op.dim();
    if steps == 0 || steps > n {
        return Err(Error::domain(format!("Lanczos steps must lie in [1, {n}], got {steps}")));
    }
    if probes.is_empty() || probes.len() % n != 0 {
        return Err(Error::domain(format!("probe block length {} is not a multiple of {n}", probes.len())));
    }
    let k = probes.len() / n;
    for (c, col) in probes.chunks_exact(n).enumerate() {
        let len = norm(col);
        if (len - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::Precondition { index: c, reason: format!("probe norm {len} is not 1") });
        }
    }

    let mut results: Vec<LanczosResult> = (0..k)
        .map(|_| LanczosResult { diag: Vec::with_capacity(steps), offdiag: Vec::with_capacity(steps), breakdown: false })
        .collect();
    let mut active = vec![true; k];
    let mut scale = vec![0.0f64; k];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    basis.push(probes.to_vec());
    let mut w = vec![0.0; n * k];

    for j in 0..steps {
        op.apply_block(&basis[j], &mut w);
        let last = j + 1 == steps;
        let mut next = if last { Vec::new() } else { vec![0.0; n * k] };
        for c in 0..k {
            if !active[c] {
                continue;
            }
            let range = c * n..(c + 1) * n;
            let wc = &mut w[range.clone()];
            let q = &basis[j][range.clone()];
            let alpha = dot(q, wc);
            axpy(wc, -alpha, q);
            if j > 0 {
                let beta_prev = results[c].offdiag[j - 1];
                axpy(wc, -beta_prev, &basis[j - 1][range.clone()]);
            }
            for _ in 0..2 {
                for qi in basis.iter() {
                    let qi = &qi[range.clone()];
                    let h = dot(qi, wc);
                    axpy(wc, -h, qi);
                }
            }
            results[c].diag.push(alpha);
            scale[c] = scale[c].max(alpha.abs());
            if last {
                continue;
            }
            let beta = norm(wc);
            if beta <= BREAKDOWN_TOLERANCE * scale[c].max(f64::MIN_POSITIVE) {
                active[c] = false;
                results[c].breakdown = true;
                continue;
            }
            scale[c] = scale[c].max(beta);
            results[c].offdiag.push(beta);
            for (dst, src) in next[range].iter_mut().zip(wc.iter()) {
                *dst = src / beta;
            }
        }
        if last || !active.iter().any(|&a| a) {
            break;
        }
        basis.push(next);
    }
    Ok(results)
}
