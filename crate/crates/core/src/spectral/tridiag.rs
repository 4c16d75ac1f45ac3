//! Eigenvalues and first eigenvector components of a symmetric tridiagonal
//! matrix by the implicit QL method with Wilkinson shifts.

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 64;

/// Gauss quadrature rule of a Jacobi matrix: ascending nodes with the
/// squared first eigenvector components as weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// `diag` has length `m`, `offdiag` length `m − 1`.
pub fn gauss_rule(diag: &[f64], offdiag: &[f64]) -> Result<GaussRule> {
    let n = diag.len();
    if n == 0 {
        return Err(Error::domain("tridiagonal matrix is empty"));
    }
    if offdiag.len() + 1 != n {
        return Err(Error::LengthMismatch { left: diag.len(), right: offdiag.len() + 1 });
    }
    let mut d = diag.to_vec();
    let mut e = offdiag.to_vec();
    e.push(0.0);
    // first row of the accumulated rotation matrix
    let mut z = vec![0.0; n];
    z[0] = 1.0;

    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > MAX_SWEEPS {
                return Err(Error::Numerical(format!("tridiagonal QL did not converge at index {l}")));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zi1 = z[i + 1];
                z[i + 1] = s * z[i] + c * zi1;
                z[i] = c * z[i] - s * zi1;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    Ok(GaussRule {
        nodes: order.iter().map(|&i| d[i]).collect(),
        weights: order.iter().map(|&i| z[i] * z[i]).collect(),
    })
}
