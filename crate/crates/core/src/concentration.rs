//! Empirical Freedman-type martingale concentration.
//!
//! Given realized per-step values `x[k]` and predictable proxies `y[k]`
//! (known before step `k` is revealed), the bounds here control the average
//! deviation `(1/n) Σ (E[x_k | past] - x_k)` with probability `1 - δ`.
//!
//! The main-text bound optimizes a variance functional over a finite grid of
//! exponential-moment parameters `s ∈ K ⊂ (0, 1)`:
//!
//! ```text
//! bound = Δ·C + Σ·√C,   C = ln(|K|/δ) / n
//! Σ     = min_{s∈K}  Δ√C (1-s)/s  +  (Δ/√C) · mean_k v(s·A_k) / s
//! A_k   = (y_k - x_k) / Δ  > -1,     v(a) = a - ln(1+a)
//! ```
//!
//! The closed-form variant replaces the grid with the empirical second
//! moment `V = mean((x-y)²)` and a slightly larger complexity term. Azuma and
//! Hoeffding baselines are provided for comparison and subsample corrections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// A_k values this close to -1 are rejected rather than clamped.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// Default number of grid points for the variance minimization.
pub const DEFAULT_GRID_SIZE: usize = 1000;

/// `v(a) = a - ln(1 + a)` for `a > -1`.
pub fn v_func(a: f64) -> Result<f64> {
    if !(a > -1.0) || !a.is_finite() {
        return Err(Error::domain(format!("v(a) requires a > -1, got {a}")));
    }
    Ok(v_unchecked(a))
}

#[inline]
fn v_unchecked(a: f64) -> f64 {
    if a.abs() < 1e-2 {
        // a²/2 - a³/3 + ... ; the direct form cancels catastrophically here
        let mut term = a * a;
        let mut acc = 0.0;
        let mut sign = 1.0;
        for k in 2..=11 {
            acc += sign * term / k as f64;
            term *= a;
            sign = -sign;
        }
        acc
    } else {
        a - a.ln_1p()
    }
}

/// Realized values `x` and predictable proxies `y` of equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationSequence {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl DeviationSequence {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
        }
        if x.is_empty() {
            return Err(Error::domain("deviation sequence must be non-empty"));
        }
        if let Some(index) = x.iter().chain(&y).position(|v| !v.is_finite()) {
            return Err(Error::Precondition {
                index: index % x.len(),
                reason: "non-finite entry".into(),
            });
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Same sequence with `c` added to both columns.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        Self::new(
            self.x.iter().map(|v| v + c).collect(),
            self.y.iter().map(|v| v + c).collect(),
        )
    }

    /// Normalized deviations `A_k = (y_k - x_k) / Δ`, validated to exceed -1.
    fn normalized(&self, delta_range: f64) -> Result<Vec<f64>> {
        self.x
            .iter()
            .zip(&self.y)
            .enumerate()
            .map(|(k, (&x, &y))| {
                let a = (y - x) / delta_range;
                if a <= -1.0 + BOUNDARY_TOLERANCE {
                    Err(Error::Precondition {
                        index: k,
                        reason: format!(
                            "x - y = {} must be strictly below the range Δ = {delta_range}",
                            x - y
                        ),
                    })
                } else {
                    Ok(a)
                }
            })
            .collect()
    }

    /// `2·sqrt(mean((x - y)²))`, the closed-form reference for Σ.
    pub fn rms_reference(&self) -> f64 {
        2.0 * self.mean_square_deviation().sqrt()
    }

    pub fn mean_square_deviation(&self) -> f64 {
        let acc: CompensatedSum = self.x.iter().zip(&self.y).map(|(x, y)| (x - y) * (x - y)).collect();
        acc.value() / self.len() as f64
    }
}

/// Finite set of grid points strictly inside (0, 1), sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridK {
    points: Vec<f64>,
}

impl GridK {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if let Some(p) = points.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::InvalidGrid(format!("point {p} outside (0, 1)")));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidGrid("points must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    /// `size` equally spaced points in (0, 1), endpoints excluded.
    pub fn uniform(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::EmptyGrid);
        }
        let step = 1.0 / (size as f64 + 1.0);
        Self::new((1..=size).map(|i| i as f64 * step).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl Default for GridK {
    fn default() -> Self {
        Self::uniform(DEFAULT_GRID_SIZE).expect("default grid is valid")
    }
}

/// Result of the grid minimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaResult {
    pub sigma: f64,
    pub argmin_s: f64,
    /// `2·sqrt(mean((x-y)²))`, reported for comparison only.
    pub rms_reference: f64,
}

/// Variance proxy Σ minimized over the grid. Ties go to the smallest point.
pub fn sigma_grid(
    seq: &DeviationSequence,
    delta_range: f64,
    complexity_c: f64,
    grid: &GridK,
) -> Result<SigmaResult> {
    if !(delta_range > 0.0) || !delta_range.is_finite() {
        return Err(Error::domain(format!("Δ must be positive and finite, got {delta_range}")));
    }
    if !(complexity_c > 0.0) || !complexity_c.is_finite() {
        return Err(Error::domain(format!("C must be positive and finite, got {complexity_c}")));
    }
    let a = seq.normalized(delta_range)?;
    let n = a.len() as f64;
    let sqrt_c = complexity_c.sqrt();

    let mut best: Option<(f64, f64)> = None;
    for &s in grid.points() {
        let acc: CompensatedSum = a.iter().map(|&ak| v_unchecked(s * ak)).collect();
        let mean_v = acc.value() / n;
        let value = delta_range * sqrt_c * (1.0 - s) / s + delta_range / sqrt_c * mean_v / s;
        match best {
            Some((b, _)) if value >= b => {}
            _ => best = Some((value, s)),
        }
    }
    let (sigma, argmin_s) = best.ok_or(Error::EmptyGrid)?;
    Ok(SigmaResult { sigma, argmin_s, rms_reference: seq.rms_reference() })
}

/// Outcome of a concentration bound; `bound = Δ·C + σ·√C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationResult {
    pub complexity_c: f64,
    pub sigma: f64,
    pub bound: f64,
    /// Minimizing grid point; `None` for the closed-form bound.
    pub argmin_s: Option<f64>,
    pub delta_range: f64,
    pub rms_reference: f64,
}

impl ConcentrationResult {
    fn assemble(
        delta_range: f64,
        complexity_c: f64,
        sigma: f64,
        argmin_s: Option<f64>,
        rms_reference: f64,
    ) -> Self {
        Self {
            complexity_c,
            sigma,
            bound: delta_range * complexity_c + sigma * complexity_c.sqrt(),
            argmin_s,
            delta_range,
            rms_reference,
        }
    }

    /// Recompute `Δ·C + σ·√C` from the stored fields.
    pub fn recomputed_bound(&self) -> f64 {
        self.delta_range * self.complexity_c + self.sigma * self.complexity_c.sqrt()
    }
}

/// Grid bound with an externally supplied complexity (e.g. a union-bound
/// complexity that already includes a code length).
pub fn freedman_bound_with_complexity(
    seq: &DeviationSequence,
    delta_range: f64,
    complexity_c: f64,
    grid: &GridK,
) -> Result<ConcentrationResult> {
    let s = sigma_grid(seq, delta_range, complexity_c, grid)?;
    Ok(ConcentrationResult::assemble(
        delta_range,
        complexity_c,
        s.sigma,
        Some(s.argmin_s),
        s.rms_reference,
    ))
}

fn check_delta_fail(delta_fail: f64) -> Result<()> {
    if delta_fail > 0.0 && delta_fail < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("failure probability must lie in (0, 1), got {delta_fail}")))
    }
}

/// Grid-minimized bound with `C = ln(|K|/δ)/n`.
pub fn freedman_bound_maintext(
    seq: &DeviationSequence,
    delta_range: f64,
    grid: &GridK,
    delta_fail: f64,
) -> Result<ConcentrationResult> {
    check_delta_fail(delta_fail)?;
    let c = (grid.len() as f64 / delta_fail).ln() / seq.len() as f64;
    freedman_bound_with_complexity(seq, delta_range, c, grid)
}

/// Closed-form variant: `Δ·C + 2√(V·C)` with
/// `C = (ln(1/δ) + 4 ln ln(n/δ) + 6)/n`.
pub fn freedman_bound_appendix(
    seq: &DeviationSequence,
    delta_range: f64,
    delta_fail: f64,
) -> Result<ConcentrationResult> {
    check_delta_fail(delta_fail)?;
    if !(delta_range > 0.0) || !delta_range.is_finite() {
        return Err(Error::domain(format!("Δ must be positive and finite, got {delta_range}")));
    }
    // Same strict constraint as the grid bound: x - y < Δ.
    seq.normalized(delta_range)?;
    let n = seq.len() as f64;
    let ratio = n / delta_fail;
    if ratio <= std::f64::consts::E {
        return Err(Error::domain(format!(
            "n/δ = {ratio} must exceed e for the log-log term"
        )));
    }
    let c = ((1.0 / delta_fail).ln() + 4.0 * ratio.ln().ln() + 6.0) / n;
    let v = seq.mean_square_deviation();
    Ok(ConcentrationResult::assemble(delta_range, c, 2.0 * v.sqrt(), None, seq.rms_reference()))
}

/// Denominator constant of the Azuma baseline, `Δ·sqrt((L + ln 1/δ)/(k·n))`.
pub const AZUMA_DENOMINATOR: f64 = 2.0;

/// Azuma-style baseline `Δ·sqrt((L + ln(1/δ)) / (2n))`.
pub fn azuma_baseline(delta_range: f64, code_len_nats: f64, n: u64, delta_fail: f64) -> Result<f64> {
    azuma_baseline_with(delta_range, code_len_nats, n, delta_fail, AZUMA_DENOMINATOR)
}

/// Azuma baseline with an explicit denominator constant.
pub fn azuma_baseline_with(
    delta_range: f64,
    code_len_nats: f64,
    n: u64,
    delta_fail: f64,
    denominator: f64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    if !(delta_fail > 0.0 && delta_fail <= 1.0) {
        return Err(Error::domain(format!("δ must lie in (0, 1], got {delta_fail}")));
    }
    if !(code_len_nats >= 0.0) || !(delta_range >= 0.0) || !(denominator > 0.0) {
        return Err(Error::domain("azuma baseline needs Δ ≥ 0, L ≥ 0 and a positive denominator"));
    }
    Ok(delta_range * ((code_len_nats + (1.0 / delta_fail).ln()) / (denominator * n as f64)).sqrt())
}

/// Two-sided Hoeffding correction for estimating a full-set mean from an
/// IID subsample of size `m` whose values lie in an interval of width `w`.
pub fn hoeffding_subsample_correction(range_width: f64, m: u64, delta_fail: f64) -> Result<f64> {
    if !(range_width > 0.0) || !range_width.is_finite() {
        return Err(Error::domain(format!("range width must be positive, got {range_width}")));
    }
    if m == 0 {
        return Err(Error::domain("subsample size must be at least 1"));
    }
    check_delta_fail(delta_fail)?;
    Ok(range_width * ((2.0 / delta_fail).ln() / (2.0 * m as f64)).sqrt())
}
