//! Stochastic Lanczos quadrature for `Tr f(H)`, in particular `Tr(H^{1/2})`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::lanczos::{batch_size, lanczos_batch};
use super::operator::SymmetricOperator;
use super::tridiag::gauss_rule;
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    /// Entries ±1; fourth moment 1.
    #[default]
    Rademacher,
    /// Entries `N(0, 1)`; fourth moment 3.
    Gaussian,
}

impl ProbeKind {
    pub fn fourth_moment(&self) -> f64 {
        match self {
            ProbeKind::Rademacher => 1.0,
            ProbeKind::Gaussian => 3.0,
        }
    }

    pub(crate) fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            ProbeKind::Rademacher => out.iter_mut().for_each(|v| *v = if rng.random::<bool>() { 1.0 } else { -1.0 }),
            ProbeKind::Gaussian => out.iter_mut().for_each(|v| *v = rng.sample(StandardNormal)),
        }
    }
}

impl std::str::FromStr for ProbeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rademacher" => Ok(ProbeKind::Rademacher),
            "gaussian" => Ok(ProbeKind::Gaussian),
            other => Err(Error::domain(format!("unknown probe kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlqConfig {
    pub steps: usize,
    pub num_probes: usize,
    pub seed: u64,
    pub probe: ProbeKind,
    /// Shift the spectrum by the most negative Ritz node instead of failing.
    pub shift_mode: bool,
}

impl SlqConfig {
    pub fn new(steps: usize, num_probes: usize, seed: u64) -> Self {
        Self { steps, num_probes, seed, probe: ProbeKind::Rademacher, shift_mode: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub breakdown: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub trace_sqrt: f64,
    pub lambda_max_est: f64,
    pub lambda_min_est: f64,
    /// `λ_max/λ_min`; absent when the smallest node is not positive.
    pub condition_est: Option<f64>,
    pub num_probes: usize,
    pub lanczos_steps: usize,
    pub shift_applied: f64,
    /// Computed on `H + shift·I`, so only an upper bound on `Tr(H^{1/2})`.
    pub upper_bound_mode: bool,
    pub dim: usize,
    /// Per-probe Ritz nodes (unshifted) and Gauss weights.
    pub quadrature: Vec<ProbeQuadrature>,
}

impl SpectralEstimate {
    /// `(n/n_v)·Σ_probes Σ_i τ_i²·f(θ_i + shift)`.
    pub fn trace_of(&self, f: impl Fn(f64) -> f64) -> f64 {
        quadrature_trace(&self.quadrature, self.dim, self.shift_applied, f)
    }

    /// Spectral density histogram: mass of probe-averaged Gauss weights per
    /// bin over `[λ_min_est, λ_max_est]`, as `(lo, hi, mass)`.
    pub fn density_histogram(&self, bins: usize) -> Vec<(f64, f64, f64)> {
        let bins = bins.max(1);
        let (lo, hi) = (self.lambda_min_est, self.lambda_max_est);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut mass = vec![0.0; bins];
        let per_probe = 1.0 / self.quadrature.len().max(1) as f64;
        for q in &self.quadrature {
            for (node, weight) in q.nodes.iter().zip(&q.weights) {
                let idx = (((node - lo) / width) as usize).min(bins - 1);
                mass[idx] += weight * per_probe;
            }
        }
        (0..bins).map(|i| (lo + i as f64 * width, lo + (i + 1) as f64 * width, mass[i])).collect()
    }
}

fn quadrature_trace(quad: &[ProbeQuadrature], dim: usize, shift: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut acc = CompensatedSum::new();
    for q in quad {
        for (node, weight) in q.nodes.iter().zip(&q.weights) {
            acc.add(weight * f(node + shift));
        }
    }
    dim as f64 / quad.len() as f64 * acc.value()
}

/// Ritz nodes this far below zero, relative to the largest node, are
/// treated as rounding noise on a singular PSD matrix.
pub const NEGATIVE_NODE_TOLERANCE: f64 = 1e-12;

/// `max(0, −λ_min)`.
pub fn shift_to_psd(lambda_min_est: f64) -> f64 {
    (-lambda_min_est).max(0.0)
}

/// Per-probe Gauss rules from `n_v` normalized random probes.
pub fn slq_quadrature<O: SymmetricOperator + ?Sized>(op: &O, cfg: &SlqConfig) -> Result<Vec<ProbeQuadrature>> {
    let n = op.dim();
    if cfg.num_probes == 0 {
        return Err(Error::domain("SLQ needs at least one probe"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let per_batch = batch_size(n, cfg.steps);
    let mut out = Vec::with_capacity(cfg.num_probes);
    let mut block = Vec::new();
    while out.len() < cfg.num_probes {
        let k = per_batch.min(cfg.num_probes - out.len());
        block.resize(n * k, 0.0);
        for col in block.chunks_exact_mut(n) {
            cfg.probe.fill(&mut rng, col);
            let len = super::operator::norm(col);
            col.iter_mut().for_each(|v| *v /= len);
        }
        for r in lanczos_batch(op, cfg.steps, &block)? {
            let rule = gauss_rule(&r.diag, &r.offdiag)?;
            out.push(ProbeQuadrature { nodes: rule.nodes, weights: rule.weights, breakdown: r.breakdown });
        }
    }
    Ok(out)
}

/// SLQ estimate of `Tr(H^{1/2})`.
pub fn slq_trace_sqrt<O: SymmetricOperator + ?Sized>(op: &O, cfg: &SlqConfig) -> Result<SpectralEstimate> {
    let quadrature = slq_quadrature(op, cfg)?;
    let lambda_min = quadrature.iter().flat_map(|q| q.nodes.first()).copied().fold(f64::INFINITY, f64::min);
    let lambda_max = quadrature.iter().flat_map(|q| q.nodes.last()).copied().fold(f64::NEG_INFINITY, f64::max);
    let noise_floor = NEGATIVE_NODE_TOLERANCE * lambda_max.abs().max(f64::MIN_POSITIVE);

    let shift = if cfg.shift_mode {
        shift_to_psd(lambda_min)
    } else if lambda_min < -noise_floor {
        return Err(Error::NegativeRitzNode { node: lambda_min });
    } else {
        0.0
    };
    let trace_sqrt = quadrature_trace(&quadrature, op.dim(), shift, |x| x.max(0.0).sqrt());
    Ok(SpectralEstimate {
        trace_sqrt,
        lambda_max_est: lambda_max,
        lambda_min_est: lambda_min,
        condition_est: (lambda_min > 0.0).then(|| lambda_max / lambda_min),
        num_probes: cfg.num_probes,
        lanczos_steps: cfg.steps,
        shift_applied: shift,
        upper_bound_mode: cfg.shift_mode,
        dim: op.dim(),
        quadrature,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlqSizing {
    pub steps: usize,
    pub num_probes: usize,
}

/// Lanczos steps and probe count for relative accuracy `ε` with
/// probability `1 − η`:
///
/// ```text
/// m ≥ ln(K/ε) / (2·ln((√κ+1)/(√κ−1))),   K = (λ_max − λ_min)(√κ − 1)²
/// n_v ≥ (24/ε²)·ln(2/η)
/// ```
///
/// The `(√κ/4)·ln(K/ε)` form is used when the sharper one is not finite.
pub fn slq_param_sizing(kappa: f64, lambda_max: f64, lambda_min: f64, eps: f64, eta: f64) -> Result<SlqSizing> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("ε must lie in (0, 1), got {eps}")));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::domain(format!("η must lie in (0, 1), got {eta}")));
    }
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(Error::domain(format!("κ must be finite and ≥ 1, got {kappa}")));
    }
    if !(lambda_min > 0.0 && lambda_max >= lambda_min) {
        return Err(Error::domain("need 0 < λ_min ≤ λ_max"));
    }
    let num_probes = (24.0 / (eps * eps) * (2.0 / eta).ln()).ceil() as usize;
    if kappa == 1.0 {
        return Ok(SlqSizing { steps: 1, num_probes });
    }
    let root = kappa.sqrt();
    let k_const = (lambda_max - lambda_min) * (root - 1.0).powi(2);
    let log_term = (k_const / eps).ln();
    if !(log_term > 0.0) {
        return Ok(SlqSizing { steps: 1, num_probes });
    }
    let denom = 2.0 * ((root + 1.0) / (root - 1.0)).ln();
    let sharp = log_term / denom;
    let steps = if sharp.is_finite() && denom > 0.0 { sharp } else { root / 4.0 * log_term };
    Ok(SlqSizing { steps: (steps.ceil() as usize).max(1), num_probes })
}
