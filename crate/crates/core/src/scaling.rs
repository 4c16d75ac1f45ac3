//! Chinchilla scaling law, compute-optimal allocation, frontier checkpoint
//! selection and power-law fitting.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, linear_regression, logspace};

/// FLOPs per parameter per token in `C ≈ 6ND`.
pub const FLOPS_PER_PARAM_TOKEN: f64 = 6.0;

/// `R(N, D) = E + A/N^α + B/D^β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChinchillaParams {
    pub irreducible: f64,
    pub coef_a: f64,
    pub coef_b: f64,
    pub exp_alpha: f64,
    pub exp_beta: f64,
}

impl ChinchillaParams {
    pub fn new(irreducible: f64, coef_a: f64, coef_b: f64, exp_alpha: f64, exp_beta: f64) -> Result<Self> {
        let p = Self { irreducible, coef_a, coef_b, exp_alpha, exp_beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.irreducible, self.coef_a, self.coef_b, self.exp_alpha, self.exp_beta];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Chinchilla parameters".into()));
        }
        if self.irreducible < 0.0 || self.coef_a < 0.0 || self.coef_b < 0.0 {
            return Err(Error::domain("E, A and B must be non-negative"));
        }
        if !(self.exp_alpha > 0.0 && self.exp_beta > 0.0) {
            return Err(Error::domain("exponents α and β must be positive"));
        }
        Ok(())
    }

    /// Loss at `N` parameters after `D` tokens.
    pub fn risk(&self, n: f64, d: f64) -> f64 {
        self.irreducible + self.coef_a * n.powf(-self.exp_alpha) + self.coef_b * d.powf(-self.exp_beta)
    }
}

pub fn chinchilla_risk(params: &ChinchillaParams, n: f64, d: f64) -> Result<f64> {
    params.validate()?;
    if !(n >= 1.0 && d >= 1.0) {
        return Err(Error::domain(format!("N and D must be at least 1, got N = {n}, D = {d}")));
    }
    Ok(params.risk(n, d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub n_star: f64,
    pub d_star: f64,
    pub g: f64,
    pub exp_a: f64,
    pub exp_b: f64,
}

/// Compute-optimal `(N*, D*)` for budget `C = 6ND`.
pub fn optimal_allocation(params: &ChinchillaParams, compute: f64) -> Result<Allocation> {
    optimal_allocation_with(params, compute, FLOPS_PER_PARAM_TOKEN)
}

pub fn optimal_allocation_with(params: &ChinchillaParams, compute: f64, flops: f64) -> Result<Allocation> {
    params.validate()?;
    if !(compute > 0.0) || !compute.is_finite() {
        return Err(Error::domain(format!("compute must be positive, got {compute}")));
    }
    if !(flops > 0.0) {
        return Err(Error::domain("FLOPs per parameter-token must be positive"));
    }
    if !(params.coef_a > 0.0 && params.coef_b > 0.0) {
        return Err(Error::domain("allocation needs A > 0 and B > 0"));
    }
    let (alpha, beta) = (params.exp_alpha, params.exp_beta);
    let sum = alpha + beta;
    let g = (alpha * params.coef_a / (beta * params.coef_b)).powf(1.0 / sum);
    let exp_a = beta / sum;
    let exp_b = alpha / sum;
    let budget = compute / flops;
    let n_star = g * budget.powf(exp_a);
    // D* = budget / N* keeps N*·D* = C/6 exact up to a single rounding.
    let d_star = budget / n_star;
    Ok(Allocation { n_star, d_star, g, exp_a, exp_b })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub tokens_seen: u64,
    pub train_loss: f64,
    /// Extra per-checkpoint quantities (Σ, R̂_h, R̂_q, ...).
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

impl Checkpoint {
    pub fn new(tokens_seen: u64, train_loss: f64) -> Self {
        Self { tokens_seen, train_loss, metrics: BTreeMap::new() }
    }

    pub fn with_metric(mut self, name: &str, value: f64) -> Self {
        self.metrics.insert(name.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointCurve {
    model_size: u64,
    points: Vec<Checkpoint>,
}

impl CheckpointCurve {
    /// Points are sorted by `tokens_seen`; duplicates are rejected.
    pub fn new(model_size: u64, mut points: Vec<Checkpoint>) -> Result<Self> {
        if model_size == 0 {
            return Err(Error::domain("model size must be at least 1"));
        }
        if points.is_empty() {
            return Err(Error::domain(format!("curve for N = {model_size} has no checkpoints")));
        }
        points.sort_by_key(|p| p.tokens_seen);
        for w in points.windows(2) {
            if w[0].tokens_seen == w[1].tokens_seen {
                return Err(Error::domain(format!("duplicate checkpoint at D = {}", w[0].tokens_seen)));
            }
        }
        if points[0].tokens_seen == 0 {
            return Err(Error::domain("checkpoints need D ≥ 1"));
        }
        if points.iter().any(|p| !p.train_loss.is_finite()) {
            return Err(Error::NonFinite("train_loss".into()));
        }
        Ok(Self { model_size, points })
    }

    pub fn model_size(&self) -> u64 {
        self.model_size
    }

    pub fn points(&self) -> &[Checkpoint] {
        &self.points
    }

    fn ratio(&self, p: &Checkpoint) -> f64 {
        self.model_size as f64 / p.tokens_seen as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    Exact,
    Interpolated,
    Nearest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierSelection {
    pub model_size: u64,
    pub ratio: f64,
    pub tokens_seen: f64,
    pub train_loss: f64,
    pub metrics: BTreeMap<String, f64>,
    pub mode: SelectionMode,
    /// `|N/D − target|` of the returned point.
    pub distance: f64,
}

const EXACT_RATIO_TOLERANCE: f64 = 1e-12;

/// Per model size, the checkpoint at `N/D = target_ratio`, interpolating
/// linearly in `N/D` between bracketing checkpoints.
pub fn select_frontier(curves: &[CheckpointCurve], target_ratio: f64) -> Result<Vec<FrontierSelection>> {
    if curves.is_empty() {
        return Err(Error::domain("no checkpoint curves given"));
    }
    if !(target_ratio > 0.0) || !target_ratio.is_finite() {
        return Err(Error::domain(format!("target ratio must be positive, got {target_ratio}")));
    }
    Ok(curves.iter().map(|c| select_one(c, target_ratio)).collect())
}

fn select_one(curve: &CheckpointCurve, target: f64) -> FrontierSelection {
    let point_selection = |p: &Checkpoint, mode| {
        let ratio = curve.ratio(p);
        FrontierSelection {
            model_size: curve.model_size,
            ratio,
            tokens_seen: p.tokens_seen as f64,
            train_loss: p.train_loss,
            metrics: p.metrics.clone(),
            mode,
            distance: (ratio - target).abs(),
        }
    };

    let nearest = curve
        .points
        .iter()
        .min_by(|a, b| {
            let da = (curve.ratio(a) - target).abs();
            let db = (curve.ratio(b) - target).abs();
            da.total_cmp(&db)
        })
        .expect("curves are non-empty");
    if (curve.ratio(nearest) - target).abs() <= EXACT_RATIO_TOLERANCE * target {
        return point_selection(nearest, SelectionMode::Exact);
    }

    // Ratios decrease along the curve since D increases.
    for w in curve.points.windows(2) {
        let (r_hi, r_lo) = (curve.ratio(&w[0]), curve.ratio(&w[1]));
        if r_lo < target && target < r_hi {
            let t = (target - r_lo) / (r_hi - r_lo);
            let lerp = |lo: f64, hi: f64| lo + t * (hi - lo);
            let metrics = w[1]
                .metrics
                .iter()
                .filter_map(|(k, &lo)| w[0].metrics.get(k).map(|&hi| (k.clone(), lerp(lo, hi))))
                .collect();
            return FrontierSelection {
                model_size: curve.model_size,
                ratio: target,
                tokens_seen: lerp(w[1].tokens_seen as f64, w[0].tokens_seen as f64),
                train_loss: lerp(w[1].train_loss, w[0].train_loss),
                metrics,
                mode: SelectionMode::Interpolated,
                distance: 0.0,
            };
        }
    }
    point_selection(nearest, SelectionMode::Nearest)
}

/// `y ≈ c + k·x^{−p}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub offset: f64,
    pub coefficient: f64,
    pub exponent: f64,
    pub rms_residual: f64,
    pub stderr_exponent: f64,
    /// Data carry no decreasing power-law component; only `offset` is meaningful.
    pub degenerate: bool,
}

impl PowerLawFit {
    pub fn eval(&self, x: f64) -> f64 {
        if self.degenerate {
            self.offset
        } else {
            self.offset + self.coefficient * x.powf(-self.exponent)
        }
    }
}

const EXPONENT_GRID: (f64, f64, usize) = (1e-3, 8.0, 400);
const GOLDEN_ITERATIONS: usize = 200;
const POLISH_ITERATIONS: usize = 20;

struct Inner {
    offset: f64,
    /// Coefficient of `(x/x_ref)^{−p}`.
    scaled_coefficient: f64,
    sse: f64,
}

struct PowerLawProblem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    log_ref: f64,
    y_mean: f64,
    total_ss: f64,
}

impl<'a> PowerLawProblem<'a> {
    fn new(x: &'a [f64], y: &'a [f64]) -> Self {
        let n = x.len() as f64;
        let log_ref = compensated_sum(x.iter().map(|v| v.ln())) / n;
        let y_mean = compensated_sum(y.iter().copied()) / n;
        let total_ss = compensated_sum(y.iter().map(|v| (v - y_mean).powi(2)));
        Self { x, y, log_ref, y_mean, total_ss }
    }

    fn basis(&self, xi: f64, p: f64) -> f64 {
        (-p * (xi.ln() - self.log_ref)).exp()
    }

    /// Closed-form least squares for `(c, k)` at fixed `p`, with `k ≥ 0`.
    fn inner(&self, p: f64) -> Inner {
        let z: Vec<f64> = self.x.iter().map(|&xi| self.basis(xi, p)).collect();
        let n = z.len() as f64;
        let z_mean = compensated_sum(z.iter().copied()) / n;
        let szz = compensated_sum(z.iter().map(|v| (v - z_mean).powi(2)));
        let szy = compensated_sum(z.iter().zip(self.y).map(|(zi, yi)| (zi - z_mean) * (yi - self.y_mean)));
        let k = if szz > 0.0 { szy / szz } else { 0.0 };
        if !(k > 0.0) {
            return Inner { offset: self.y_mean, scaled_coefficient: 0.0, sse: self.total_ss };
        }
        let c = self.y_mean - k * z_mean;
        let sse = compensated_sum(z.iter().zip(self.y).map(|(zi, yi)| (yi - c - k * zi).powi(2)));
        Inner { offset: c, scaled_coefficient: k, sse }
    }

    fn sse(&self, c: f64, k: f64, p: f64) -> f64 {
        compensated_sum(self.x.iter().zip(self.y).map(|(&xi, yi)| (yi - c - k * self.basis(xi, p)).powi(2)))
    }

    /// Jacobian of the model in `(c, k, p)` at each point.
    fn jacobian_row(&self, xi: f64, k: f64, p: f64) -> Vector3<f64> {
        let z = self.basis(xi, p);
        Vector3::new(1.0, z, -k * z * (xi.ln() - self.log_ref))
    }

    fn normal_equations(&self, c: f64, k: f64, p: f64) -> (Matrix3<f64>, Vector3<f64>) {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (&xi, &yi) in self.x.iter().zip(self.y) {
            let row = self.jacobian_row(xi, k, p);
            let r = yi - c - k * self.basis(xi, p);
            jtj += row * row.transpose();
            jtr += row * r;
        }
        (jtj, jtr)
    }
}

/// Least-squares fit of `y ≈ c + k·x^{−p}` with `k, p > 0`.
///
/// Searches `p` on a log grid, refines by golden section with `(c, k)`
/// solved in closed form, then polishes all three with Gauss-Newton.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 4 {
        return Err(Error::domain(format!("power-law fit needs at least 4 points, got {}", points.len())));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0) || !x.is_finite() || !y.is_finite()) {
        return Err(Error::domain("power-law fit needs finite y and finite positive x"));
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    if xs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::domain("power-law fit needs distinct x values"));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let problem = PowerLawProblem::new(&x, &y);
    let n = x.len();

    let y_scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let degenerate = || PowerLawFit {
        offset: problem.y_mean,
        coefficient: 0.0,
        exponent: 0.0,
        rms_residual: (problem.total_ss / n as f64).sqrt(),
        stderr_exponent: 0.0,
        degenerate: true,
    };
    if problem.total_ss <= (1e-24 * y_scale * y_scale) * n as f64 {
        return Ok(degenerate());
    }

    let (lo, hi, count) = EXPONENT_GRID;
    let grid = logspace(lo, hi, count);
    let mut trace = Vec::with_capacity(count + GOLDEN_ITERATIONS);
    let mut best = (0usize, f64::INFINITY);
    for (i, &p) in grid.iter().enumerate() {
        let sse = problem.inner(p).sse;
        trace.push((p, sse));
        if !sse.is_finite() {
            return Err(Error::FitFailure { reason: format!("non-finite objective at p = {p}"), trace });
        }
        if sse < best.1 {
            best = (i, sse);
        }
    }

    // Golden-section refinement on the bracketing grid cell.
    let ln_lo = grid[best.0.saturating_sub(1)].ln();
    let ln_hi = grid[(best.0 + 1).min(count - 1)].ln();
    let objective = |ln_p: f64| problem.inner(ln_p.exp()).sse;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (ln_lo, ln_hi);
    let mut c1 = b - inv_phi * (b - a);
    let mut c2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (objective(c1), objective(c2));
    for _ in 0..GOLDEN_ITERATIONS {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if f1 <= f2 {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - inv_phi * (b - a);
            f1 = objective(c1);
            trace.push((c1.exp(), f1));
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + inv_phi * (b - a);
            f2 = objective(c2);
            trace.push((c2.exp(), f2));
        }
        if !f1.is_finite() || !f2.is_finite() {
            return Err(Error::FitFailure { reason: "non-finite objective during refinement".into(), trace });
        }
    }
    let mut p = (if f1 <= f2 { c1 } else { c2 }).exp();
    let inner = problem.inner(p);
    if inner.scaled_coefficient == 0.0 {
        return Ok(degenerate());
    }
    let (mut c, mut k, mut sse) = (inner.offset, inner.scaled_coefficient, inner.sse);

    for _ in 0..POLISH_ITERATIONS {
        let (jtj, jtr) = problem.normal_equations(c, k, p);
        let Some(step) = jtj.lu().solve(&jtr) else { break };
        let (nc, nk, np) = (c + step[0], k + step[1], p + step[2]);
        if !(nk > 0.0 && np > 0.0) {
            break;
        }
        let nsse = problem.sse(nc, nk, np);
        if !(nsse < sse) {
            break;
        }
        (c, k, p, sse) = (nc, nk, np, nsse);
    }

    let stderr_exponent = if n > 3 {
        let (jtj, _) = problem.normal_equations(c, k, p);
        let s2 = sse / (n - 3) as f64;
        jtj.try_inverse().map_or(f64::INFINITY, |inv| (s2 * inv[(2, 2)]).max(0.0).sqrt())
    } else {
        f64::INFINITY
    };

    Ok(PowerLawFit {
        offset: c,
        // Undo the x_ref normalization: k·(x/x_ref)^{−p} = k·x_ref^p·x^{−p}.
        coefficient: k * (p * problem.log_ref).exp(),
        exponent: p,
        rms_residual: (sse / n as f64).sqrt(),
        stderr_exponent,
        degenerate: false,
    })
}

/// `y ≈ k·x^p`, fitted as a straight line in log-log coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthLawFit {
    pub coefficient: f64,
    pub exponent: f64,
}

pub fn fit_growth_law(points: &[(f64, f64)]) -> Result<GrowthLawFit> {
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0) || !x.is_finite() || !y.is_finite()) {
        return Err(Error::domain("growth-law fit needs finite positive x and y"));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept) = linear_regression(&lx, &ly)?;
    Ok(GrowthLawFit { coefficient: intercept.exp(), exponent: slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn symmetric(e: f64, ab: f64, exp: f64) -> ChinchillaParams {
        ChinchillaParams::new(e, ab, ab, exp, exp).unwrap()
    }

    #[test]
    fn risk_examples() {
        let p = ChinchillaParams::new(1.7, 0.0, 0.0, 0.5, 0.5).unwrap();
        assert_eq!(chinchilla_risk(&p, 10.0, 10.0).unwrap(), 1.7);
        let p = symmetric(1.7, 100.0, 0.5);
        assert!((chinchilla_risk(&p, 1e4, 1e4).unwrap() - 3.7).abs() < 1e-12);
        assert!((p.risk(1e30, 1e30) - 1.7).abs() < 1e-12);
        assert!(chinchilla_risk(&p, 0.0, 10.0).is_err());
        assert!(ChinchillaParams::new(1.0, 1.0, 1.0, 0.0, 0.3).is_err());
    }

    #[test]
    fn symmetric_exponents_split_compute_evenly() {
        let p = ChinchillaParams::new(1.7, 400.0, 400.0 * 20f64.sqrt(), 0.5, 0.5).unwrap();
        let a = optimal_allocation(&p, 6.0 * 20.0 * 1e12).unwrap();
        assert_eq!((a.exp_a, a.exp_b), (0.5, 0.5));
        assert!((a.g * a.g - 1.0 / 20.0).abs() < 1e-15);
        assert!((a.n_star / a.d_star - 1.0 / 20.0).abs() < 1e-15);
        assert!((a.n_star - 1e6).abs() < 1e-6);
        assert!((a.d_star - 2e7).abs() < 1e-4);
    }

    #[test]
    fn allocation_is_first_order_optimal() {
        let p = ChinchillaParams::new(1.82, 482.01, 2085.43, 0.3478, 0.3658).unwrap();
        let budget = 1e21;
        let a = optimal_allocation(&p, budget).unwrap();
        let f = |n: f64| p.risk(n, budget / (6.0 * n));
        let h = a.n_star * 1e-4;
        let derivative = (f(a.n_star + h) - f(a.n_star - h)) / (2.0 * h);
        // scale of each term's derivative at N*
        let scale = p.exp_alpha * p.coef_a * a.n_star.powf(-p.exp_alpha - 1.0);
        assert!(derivative.abs() <= 1e-6 * scale, "{derivative} vs {scale}");
    }

    #[test]
    fn frontier_exact_interpolated_and_nearest() {
        let exact = CheckpointCurve::new(
            100,
            vec![Checkpoint::new(1000, 2.0), Checkpoint::new(2000, 1.9), Checkpoint::new(4000, 1.8)],
        )
        .unwrap();
        let bracket = CheckpointCurve::new(
            100,
            vec![
                Checkpoint::new(1000, 2.0).with_metric("sigma", 0.5),
                Checkpoint::new(3000, 1.8).with_metric("sigma", 0.3),
            ],
        )
        .unwrap();
        let single = CheckpointCurve::new(100, vec![Checkpoint::new(500, 2.5)]).unwrap();
        let sel = select_frontier(&[exact, bracket, single], 1.0 / 20.0).unwrap();
        assert_eq!(sel[0].mode, SelectionMode::Exact);
        assert_eq!(sel[0].tokens_seen, 2000.0);
        assert_eq!(sel[1].mode, SelectionMode::Interpolated);
        assert!((sel[1].train_loss - 1.85).abs() < 1e-12);
        assert!((sel[1].metrics["sigma"] - 0.35).abs() < 1e-12);
        assert!(sel[1].ratio <= 0.1 && sel[1].ratio >= 1.0 / 30.0);
        assert_eq!(sel[2].mode, SelectionMode::Nearest);
        assert!(sel[2].distance > 0.0);
        assert!(select_frontier(&[], 0.05).is_err());
    }

    fn planted(noise: Option<(u64, f64)>) -> Vec<(f64, f64)> {
        let xs = logspace(1e7, 1e10, 8);
        let mut rng = noise.map(|(seed, _)| ChaCha8Rng::seed_from_u64(seed));
        xs.into_iter()
            .map(|x| {
                let y = 0.27 + 8337.0 * x.powf(-0.54);
                let factor = match (&mut rng, noise) {
                    (Some(r), Some((_, s))) => 1.0 + Normal::new(0.0, s).unwrap().sample(r),
                    _ => 1.0,
                };
                (x, y * factor)
            })
            .collect()
    }

    #[test]
    fn recovers_planted_power_law() {
        let fit = fit_power_law(&planted(None)).unwrap();
        assert!((fit.offset / 0.27 - 1.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.coefficient / 8337.0 - 1.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.exponent / 0.54 - 1.0).abs() < 1e-6, "{fit:?}");
        assert!(fit.rms_residual < 1e-9);
    }

    #[test]
    fn noisy_exponent_stays_close() {
        for seed in 0..20 {
            let fit = fit_power_law(&planted(Some((seed, 0.01)))).unwrap();
            assert!((fit.exponent - 0.54).abs() < 0.05, "seed {seed}: {fit:?}");
            assert!(fit.stderr_exponent > 0.0);
        }
    }

    #[test]
    fn constant_data_is_degenerate() {
        let pts: Vec<(f64, f64)> = (1..=6).map(|i| (i as f64, 0.75)).collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.offset, 0.75);
        let rising: Vec<(f64, f64)> = (1..=6).map(|i| (i as f64, i as f64)).collect();
        assert!(fit_power_law(&rising).unwrap().degenerate);
        assert!(fit_power_law(&pts[..3]).is_err());
    }

    #[test]
    fn growth_law_recovers_exponent() {
        let pts: Vec<(f64, f64)> = logspace(1e6, 1e10, 6).into_iter().map(|x| (x, 6e5 * x.sqrt())).collect();
        let g = fit_growth_law(&pts).unwrap();
        assert!((g.exponent - 0.5).abs() < 1e-12);
        assert!((g.coefficient / 6e5 - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn allocation_product_identity(
            a in 1.0f64..1e4, b in 1.0f64..1e4, alpha in 0.05f64..1.0, beta in 0.05f64..1.0, lc in 10.0f64..30.0
        ) {
            let p = ChinchillaParams::new(1.0, a, b, alpha, beta).unwrap();
            let compute = 10f64.powf(lc);
            let al = optimal_allocation(&p, compute).unwrap();
            prop_assert!((al.n_star * al.d_star / (compute / 6.0) - 1.0).abs() < 1e-12);
            let ratio = al.g * al.g * (compute / 6.0).powf(al.exp_a - al.exp_b);
            prop_assert!((al.n_star / al.d_star / ratio - 1.0).abs() < 1e-9);
        }

        #[test]
        fn fit_is_scale_covariant(s in 0.1f64..100.0) {
            let base = planted(Some((3, 0.01)));
            let scaled: Vec<(f64, f64)> = base.iter().map(|&(x, y)| (x, s * y)).collect();
            let f0 = fit_power_law(&base).unwrap();
            let f1 = fit_power_law(&scaled).unwrap();
            prop_assert!((f1.exponent - f0.exponent).abs() < 1e-6 * f0.exponent);
            prop_assert!((f1.offset - s * f0.offset).abs() < 1e-5 * (s * f0.offset.abs()).max(1e-3));
            prop_assert!((f1.coefficient / (s * f0.coefficient) - 1.0).abs() < 1e-5);
        }
    }
}
