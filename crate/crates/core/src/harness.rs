//! Monte Carlo validation on synthetic token processes whose conditional
//! distributions are explicit, so the tokenwise conditional mean loss
//! `E[X_k | past]` is known exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_bound, BoundConfig, TokenRecord, TokenTrace, TraceSource};
use crate::coding::union_complexity;
use crate::concentration::{
    azuma_baseline, freedman_bound_appendix, freedman_bound_maintext, freedman_bound_with_complexity,
    DeviationSequence, GridK,
};
use crate::error::{Error, Result};
use crate::numeric::{compensated_mean, derive_seed, loglog_slope};
use crate::smoothing::optimal_alpha;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    /// Fresh Dirichlet conditionals at every position.
    DirichletCategorical,
    /// First-order Markov chain whose transition matrix drifts over time.
    MarkovDrift,
    /// Peaked conditionals with a predictor that is confidently wrong half
    /// the time.
    AdversarialVariance,
    /// Deterministic next token; the tokenwise gap is identically zero.
    PointMass,
    /// Uniform conditionals and predictor; every loss equals `ln V`.
    Uniform,
}

impl ProcessKind {
    pub const ALL: [ProcessKind; 5] = [
        ProcessKind::DirichletCategorical,
        ProcessKind::MarkovDrift,
        ProcessKind::AdversarialVariance,
        ProcessKind::PointMass,
        ProcessKind::Uniform,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceProfile {
    Low,
    Medium,
    High,
}

impl VarianceProfile {
    pub const ALL: [VarianceProfile; 3] = [VarianceProfile::Low, VarianceProfile::Medium, VarianceProfile::High];

    /// Dirichlet concentration of the true conditionals.
    fn concentration(&self) -> f64 {
        match self {
            VarianceProfile::Low => 0.02,
            VarianceProfile::Medium => 0.3,
            VarianceProfile::High => 0.1,
        }
    }

    /// Weight of the noise component in the predictor.
    fn mismatch(&self) -> f64 {
        match self {
            VarianceProfile::Low => 0.02,
            VarianceProfile::Medium => 0.2,
            VarianceProfile::High => 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenProcessSpec {
    pub vocab: usize,
    pub process_kind: ProcessKind,
    pub horizon: usize,
    pub variance_profile: VarianceProfile,
    pub seed: u64,
}

impl TokenProcessSpec {
    pub fn new(vocab: usize, process_kind: ProcessKind, horizon: usize, variance_profile: VarianceProfile, seed: u64) -> Self {
        Self { vocab, process_kind, horizon, variance_profile, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.vocab < 2 {
            return Err(Error::domain(format!("vocabulary must have at least 2 symbols, got {}", self.vocab)));
        }
        if self.vocab > u32::MAX as usize {
            return Err(Error::domain("vocabulary too large"));
        }
        if self.horizon == 0 {
            return Err(Error::domain("horizon must be at least 1"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }
}

/// Built-in predictor: a full-precision model `p_h`, its quantization
/// (log-probabilities rounded to a grid, renormalized) and smoothing of the
/// quantized model with the uniform distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub alpha: f64,
    /// Grid step for rounding log-probabilities; 0 disables quantization.
    pub logit_step: f64,
}

impl Default for PredictorSpec {
    fn default() -> Self {
        Self { alpha: 0.05, logit_step: 0.25 }
    }
}

/// Conditional distributions at one position.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistributions {
    pub truth: Vec<f64>,
    pub full: Vec<f64>,
    /// Smoothed quantized predictor, whose loss the trace records.
    pub quant: Vec<f64>,
}

impl StepDistributions {
    /// `E_{Y∼q}[−ln p_sq(Y)]`.
    pub fn conditional_mean_loss(&self) -> f64 {
        expected_nll(&self.truth, &self.quant)
    }

    /// `E_{Y∼p_h}[−ln p_sq(Y)]`.
    pub fn proxy_mean(&self) -> f64 {
        expected_nll(&self.full, &self.quant)
    }
}

fn expected_nll(weights: &[f64], p: &[f64]) -> f64 {
    weights.iter().zip(p).filter(|(w, _)| **w > 0.0).map(|(w, pi)| -w * pi.ln()).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTrace {
    pub trace: TokenTrace,
    /// Exact `E[X_k | past]` for the smoothed quantized loss.
    pub ground_truth: Vec<f64>,
    pub tokens: Vec<u32>,
}

impl SyntheticTrace {
    /// Tokenwise population risk `(1/n) Σ E[X_k | past]`.
    pub fn population_risk(&self) -> f64 {
        compensated_mean(&self.ground_truth).unwrap_or(f64::NAN)
    }

    /// `(1/n) Σ (E[X_k | past] − X_k)`.
    pub fn true_mean_gap(&self) -> f64 {
        self.population_risk() - self.trace.empirical_risk_quant()
    }
}

/// Simulate a process, returning the per-step distributions and tokens.
pub fn simulate(spec: &TokenProcessSpec, predictor: &PredictorSpec) -> Result<(Vec<StepDistributions>, Vec<u32>)> {
    spec.validate()?;
    if !(0.0..1.0).contains(&predictor.alpha) || !(predictor.logit_step >= 0.0) {
        return Err(Error::domain("predictor needs α ∈ [0, 1) and a non-negative logit step"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut process = Process::new(spec, &mut rng)?;
    let mut steps = Vec::with_capacity(spec.horizon);
    let mut tokens = Vec::with_capacity(spec.horizon);
    let mut prev = 0usize;
    for k in 0..spec.horizon {
        let (truth, full) = process.step(k, prev, &mut rng)?;
        let quant = quantize_and_smooth(&full, predictor);
        let token = sample_index(&truth, &mut rng);
        steps.push(StepDistributions { truth, full, quant });
        tokens.push(token as u32);
        prev = token;
    }
    Ok((steps, tokens))
}

/// Synthetic trace with exact ground-truth conditional means.
pub fn generate_trace(spec: &TokenProcessSpec, predictor: &PredictorSpec) -> Result<SyntheticTrace> {
    let (steps, tokens) = simulate(spec, predictor)?;
    let mut records = Vec::with_capacity(steps.len());
    let mut ground_truth = Vec::with_capacity(steps.len());
    for (k, (s, &t)) in steps.iter().zip(&tokens).enumerate() {
        let t = t as usize;
        records.push(TokenRecord {
            index: k as u64,
            nll_full: -s.full[t].ln(),
            nll_quant: -s.quant[t].ln(),
            proxy_mean_quant: s.proxy_mean(),
        });
        ground_truth.push(s.conditional_mean_loss());
    }
    let trace = TokenTrace::new(predictor.alpha, spec.vocab as u64, records, TraceSource::Synthetic, None)?;
    Ok(SyntheticTrace { trace, ground_truth, tokens })
}

fn quantize_and_smooth(full: &[f64], predictor: &PredictorSpec) -> Vec<f64> {
    let v = full.len() as f64;
    let mut q: Vec<f64> = if predictor.logit_step > 0.0 {
        let s = predictor.logit_step;
        full.iter().map(|p| ((p.ln() / s).round() * s).exp()).collect()
    } else {
        full.to_vec()
    };
    let total: f64 = q.iter().sum();
    q.iter_mut().for_each(|p| *p = (1.0 - predictor.alpha) * (*p / total) + predictor.alpha / v);
    q
}

fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * p.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&pi| pi > 0.0).unwrap_or(0)
}

fn dirichlet<R: Rng + ?Sized>(concentration: f64, dim: usize, rng: &mut R) -> Result<Vec<f64>> {
    let gamma = Gamma::new(concentration, 1.0).map_err(|e| Error::domain(e.to_string()))?;
    loop {
        let g: Vec<f64> = (0..dim).map(|_| gamma.sample(rng)).collect();
        let total: f64 = g.iter().sum();
        if total > 0.0 && total.is_finite() {
            return Ok(g.into_iter().map(|x| x / total).collect());
        }
    }
}

fn mix(a: &[f64], b: &[f64], weight_b: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (1.0 - weight_b) * x + weight_b * y).collect()
}

enum Process {
    Dirichlet { vocab: usize, concentration: f64, mismatch: f64 },
    Markov { start: Vec<Vec<f64>>, end: Vec<Vec<f64>>, noise: Vec<Vec<f64>>, mismatch: f64, horizon: usize },
    Adversarial { vocab: usize, concentration: f64, hedge: f64 },
    PointMass { vocab: usize, mismatch: f64 },
    Uniform { vocab: usize },
}

impl Process {
    fn new<R: Rng + ?Sized>(spec: &TokenProcessSpec, rng: &mut R) -> Result<Self> {
        let v = spec.vocab;
        let profile = spec.variance_profile;
        Ok(match spec.process_kind {
            ProcessKind::DirichletCategorical => {
                Process::Dirichlet { vocab: v, concentration: profile.concentration(), mismatch: profile.mismatch() }
            }
            ProcessKind::MarkovDrift => {
                let rows = |rng: &mut R, c| (0..v).map(|_| dirichlet(c, v, rng)).collect::<Result<Vec<_>>>();
                Process::Markov {
                    start: rows(rng, profile.concentration())?,
                    end: rows(rng, profile.concentration())?,
                    noise: rows(rng, 1.0)?,
                    mismatch: profile.mismatch(),
                    horizon: spec.horizon,
                }
            }
            ProcessKind::AdversarialVariance => Process::Adversarial {
                vocab: v,
                concentration: 0.02,
                hedge: match profile {
                    VarianceProfile::Low => 0.5,
                    VarianceProfile::Medium => 0.2,
                    VarianceProfile::High => 0.05,
                },
            },
            ProcessKind::PointMass => Process::PointMass { vocab: v, mismatch: profile.mismatch() },
            ProcessKind::Uniform => Process::Uniform { vocab: v },
        })
    }

    /// True conditional and full-precision predictor at step `k`.
    fn step<R: Rng + ?Sized>(&mut self, k: usize, prev: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok(match self {
            Process::Dirichlet { vocab, concentration, mismatch } => {
                let truth = dirichlet(*concentration, *vocab, rng)?;
                let noise = noisy_uniform(*vocab, rng)?;
                let full = mix(&truth, &noise, *mismatch);
                (truth, full)
            }
            Process::Markov { start, end, noise, mismatch, horizon } => {
                let w = if *horizon > 1 { k as f64 / (*horizon - 1) as f64 } else { 0.0 };
                let truth = mix(&start[prev], &end[prev], w);
                let belief = mix(&start[prev], &end[prev], 0.5);
                let v = truth.len() as f64;
                let hedge: Vec<f64> = noise[prev].iter().map(|x| 0.5 * x + 0.5 / v).collect();
                (truth, mix(&belief, &hedge, *mismatch))
            }
            Process::Adversarial { vocab, concentration, hedge } => {
                let truth = dirichlet(*concentration, *vocab, rng)?;
                let belief = if rng.random::<bool>() { truth.clone() } else { dirichlet(*concentration, *vocab, rng)? };
                let uniform = vec![1.0 / *vocab as f64; *vocab];
                (truth, mix(&belief, &uniform, *hedge))
            }
            Process::PointMass { vocab, mismatch } => {
                let target = rng.random_range(0..*vocab);
                let mut truth = vec![0.0; *vocab];
                truth[target] = 1.0;
                let noise = noisy_uniform(*vocab, rng)?;
                let full = mix(&truth, &noise, *mismatch);
                (truth, full)
            }
            Process::Uniform { vocab } => {
                let u = vec![1.0 / *vocab as f64; *vocab];
                (u.clone(), u)
            }
        })
    }
}

/// Half Dirichlet(1), half uniform: strictly positive everywhere.
fn noisy_uniform<R: Rng + ?Sized>(vocab: usize, rng: &mut R) -> Result<Vec<f64>> {
    let d = dirichlet(1.0, vocab, rng)?;
    Ok(d.into_iter().map(|x| 0.5 * x + 0.5 / vocab as f64).collect())
}

/// Ten configurations: every variance profile of the three non-degenerate
/// process kinds, plus the uniform process. The point-mass process is left
/// out because its risk sits at the smoothing floor, where halving the
/// risk limit cannot produce a violation.
pub fn default_coverage_suite(vocab: usize, horizon: usize, seed: u64) -> Vec<TokenProcessSpec> {
    let mut suite = Vec::new();
    for kind in [ProcessKind::DirichletCategorical, ProcessKind::MarkovDrift, ProcessKind::AdversarialVariance] {
        for profile in VarianceProfile::ALL {
            suite.push(TokenProcessSpec::new(vocab, kind, horizon, profile, derive_seed(seed, suite.len() as u64)));
        }
    }
    suite.push(TokenProcessSpec::new(vocab, ProcessKind::Uniform, horizon, VarianceProfile::Low, derive_seed(seed, 9)));
    suite
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Azuma,
    FreedmanMaintext,
    FreedmanAppendix,
}

impl BoundKind {
    pub const ALL: [BoundKind; 3] = [BoundKind::Azuma, BoundKind::FreedmanMaintext, BoundKind::FreedmanAppendix];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub trials: usize,
    pub delta_fail: f64,
    pub grid: GridK,
    pub predictor: PredictorSpec,
}

impl McConfig {
    pub fn new(trials: usize, delta_fail: f64, grid_size: usize) -> Result<Self> {
        Ok(Self { trials, delta_fail, grid: GridK::uniform(grid_size)?, predictor: PredictorSpec::default() })
    }

    fn range(&self, vocab: usize) -> Result<f64> {
        if !(self.predictor.alpha > 0.0) {
            return Err(Error::domain("Monte Carlo bounds need a smoothed predictor (α > 0)"));
        }
        Ok((vocab as f64 / self.predictor.alpha).ln())
    }
}

/// Upper bound on the tokenwise mean gap `(1/n) Σ (E[X_k|past] − X_k)`.
pub fn gap_bound(kind: BoundKind, trace: &TokenTrace, delta_range: f64, grid: &GridK, delta_fail: f64) -> Result<f64> {
    let seq = trace.deviation_sequence()?;
    match kind {
        BoundKind::Azuma => azuma_baseline(delta_range, 0.0, trace.len() as u64, delta_fail),
        BoundKind::FreedmanMaintext => Ok(freedman_bound_maintext(&seq, delta_range, grid, delta_fail)?.bound),
        BoundKind::FreedmanAppendix => Ok(freedman_bound_appendix(&seq, delta_range, delta_fail)?.bound),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub spec: TokenProcessSpec,
    pub bound: BoundKind,
    pub trials: usize,
    pub violations: usize,
    pub violation_rate: f64,
    pub binomial_upper_99: f64,
    /// Violation rate of the halved upper confidence limit on the risk,
    /// `(R̂ + gap bound)/2`.
    pub negative_control_rate: f64,
    /// Violation rate when only the gap bound is halved (informational).
    pub halved_gap_rate: f64,
    pub mean_bound: f64,
    pub mean_true_gap: f64,
    pub mean_population_risk: f64,
}

pub const MIN_COVERAGE_TRIALS: usize = 100;

/// Fraction of independent trials in which the true tokenwise gap exceeds
/// the bound, with a one-sided 99% Clopper-Pearson upper limit.
pub fn coverage_test(kind: BoundKind, spec: &TokenProcessSpec, cfg: &McConfig) -> Result<CoverageResult> {
    Ok(coverage_suite(&[kind], spec, cfg)?.remove(0))
}

/// [`coverage_test`] for several bounds evaluated on the same trials.
pub fn coverage_suite(kinds: &[BoundKind], spec: &TokenProcessSpec, cfg: &McConfig) -> Result<Vec<CoverageResult>> {
    if cfg.trials < MIN_COVERAGE_TRIALS {
        return Err(Error::domain(format!("coverage needs at least {MIN_COVERAGE_TRIALS} trials")));
    }
    if kinds.is_empty() {
        return Err(Error::domain("no bounds selected"));
    }
    let delta_range = cfg.range(spec.vocab)?;
    let mut tallies = vec![Tally::default(); kinds.len()];
    let mut risk_sum = 0.0;
    for trial in 0..cfg.trials {
        let s = spec.with_seed(derive_seed(spec.seed, trial as u64));
        let synth = generate_trace(&s, &cfg.predictor)?;
        let gap = synth.true_mean_gap();
        let risk = synth.population_risk();
        let r_hat = synth.trace.empirical_risk_quant();
        risk_sum += risk;
        for (kind, tally) in kinds.iter().zip(tallies.iter_mut()) {
            let bound = gap_bound(*kind, &synth.trace, delta_range, &cfg.grid, cfg.delta_fail)?;
            tally.violations += usize::from(gap > bound);
            tally.halved += usize::from(gap > bound / 2.0);
            tally.control += usize::from(risk > (r_hat + bound) / 2.0);
            tally.bound_sum += bound;
            tally.gap_sum += gap;
        }
    }
    let t = cfg.trials as f64;
    Ok(kinds
        .iter()
        .zip(tallies)
        .map(|(kind, tally)| CoverageResult {
            spec: *spec,
            bound: *kind,
            trials: cfg.trials,
            violations: tally.violations,
            violation_rate: tally.violations as f64 / t,
            binomial_upper_99: binomial_upper_limit(tally.violations as u64, cfg.trials as u64, 0.99),
            negative_control_rate: tally.control as f64 / t,
            halved_gap_rate: tally.halved as f64 / t,
            mean_bound: tally.bound_sum / t,
            mean_true_gap: tally.gap_sum / t,
            mean_population_risk: risk_sum / t,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    violations: usize,
    control: usize,
    halved: usize,
    bound_sum: f64,
    gap_sum: f64,
}

/// Monte Carlo check of the assembled bound: fraction of trials in which
/// the population risk of the smoothed quantized predictor exceeds
/// `total_bound`. The predictor's α is set from the configuration.
pub fn assembled_coverage(spec: &TokenProcessSpec, cfg: &BoundConfig, trials: usize, logit_step: f64) -> Result<(usize, f64)> {
    let complexity = cfg.complexity(cfg.delta_fail)?;
    let alpha = optimal_alpha(complexity, cfg.vocab)?.alpha();
    let predictor = PredictorSpec { alpha, logit_step };
    let mut violations = 0;
    for trial in 0..trials {
        let s = spec.with_seed(derive_seed(spec.seed, trial as u64));
        let synth = generate_trace(&s, &predictor)?;
        let report = assemble_bound(&synth.trace, cfg)?;
        violations += usize::from(synth.population_risk() > report.total_bound);
    }
    Ok((violations, violations as f64 / trials.max(1) as f64))
}

/// One-sided Clopper-Pearson upper limit for `k` successes in `n` trials.
pub fn binomial_upper_limit(k: u64, n: u64, confidence: f64) -> f64 {
    if k >= n {
        return 1.0;
    }
    let tail = 1.0 - confidence;
    let (mut lo, mut hi) = (k as f64 / n as f64, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if binomial_cdf(k, n, mid) > tail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// `P(Bin(n, p) ≤ k)`, summed in log space.
fn binomial_cdf(k: u64, n: u64, p: f64) -> f64 {
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return if k >= n { 1.0 } else { 0.0 };
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let mut log_choose = 0.0;
    let mut total = 0.0;
    for i in 0..=k {
        if i > 0 {
            log_choose += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        total += (log_choose + i as f64 * lp + (n - i) as f64 * lq).exp();
    }
    total.min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessRow {
    pub process_kind: ProcessKind,
    pub variance_profile: VarianceProfile,
    pub horizon: usize,
    pub trials: usize,
    pub azuma_mean: f64,
    pub maintext_mean: f64,
    pub appendix_mean: f64,
    /// Fraction of trials where the grid bound is below Azuma.
    pub maintext_win_rate: f64,
    pub appendix_win_rate: f64,
}

/// Mean bound values and win rates against the Azuma baseline.
pub fn tightness_report(specs: &[TokenProcessSpec], horizons: &[usize], cfg: &McConfig) -> Result<Vec<TightnessRow>> {
    let mut rows = Vec::with_capacity(specs.len() * horizons.len());
    for spec in specs {
        let delta_range = cfg.range(spec.vocab)?;
        for &horizon in horizons {
            let base = TokenProcessSpec { horizon, ..*spec };
            let mut sums = [0.0; 3];
            let mut wins = [0usize; 2];
            for trial in 0..cfg.trials {
                let s = base.with_seed(derive_seed(base.seed, trial as u64));
                let synth = generate_trace(&s, &cfg.predictor)?;
                let b: Vec<f64> = BoundKind::ALL
                    .iter()
                    .map(|&k| gap_bound(k, &synth.trace, delta_range, &cfg.grid, cfg.delta_fail))
                    .collect::<Result<_>>()?;
                for i in 0..3 {
                    sums[i] += b[i];
                }
                wins[0] += usize::from(b[1] < b[0]);
                wins[1] += usize::from(b[2] < b[0]);
            }
            let t = cfg.trials.max(1) as f64;
            rows.push(TightnessRow {
                process_kind: spec.process_kind,
                variance_profile: spec.variance_profile,
                horizon,
                trials: cfg.trials,
                azuma_mean: sums[0] / t,
                maintext_mean: sums[1] / t,
                appendix_mean: sums[2] / t,
                maintext_win_rate: wins[0] as f64 / t,
                appendix_win_rate: wins[1] as f64 / t,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadingTermScaling {
    pub horizons: Vec<u64>,
    pub freedman: Vec<f64>,
    pub azuma: Vec<f64>,
    pub freedman_slope: f64,
    pub azuma_slope: f64,
}

/// Bound vs `n` at a fixed code length on sequences with almost no loss
/// variation: `x_k = y_k + noise·Δ·u_k`, `u_k` uniform on `[−1, 1]`.
pub fn leading_term_scaling(
    horizons: &[u64],
    code_nats: f64,
    delta_range: f64,
    noise: f64,
    grid: &GridK,
    delta_fail: f64,
    seed: u64,
) -> Result<LeadingTermScaling> {
    let mut freedman = Vec::with_capacity(horizons.len());
    let mut azuma = Vec::with_capacity(horizons.len());
    for (i, &n) in horizons.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        let y = vec![1.0; n as usize];
        let x: Vec<f64> = y.iter().map(|&yk| yk + noise * delta_range * rng.random_range(-1.0..=1.0)).collect();
        let seq = DeviationSequence::new(x, y)?;
        let c = union_complexity(code_nats, n, grid.len(), delta_fail)?;
        freedman.push(freedman_bound_with_complexity(&seq, delta_range, c, grid)?.bound);
        azuma.push(azuma_baseline(delta_range, code_nats, n, delta_fail)?);
    }
    let ns: Vec<f64> = horizons.iter().map(|&n| n as f64).collect();
    Ok(LeadingTermScaling {
        horizons: horizons.to_vec(),
        freedman_slope: loglog_slope(&ns, &freedman)?,
        azuma_slope: loglog_slope(&ns, &azuma)?,
        freedman,
        azuma,
    })
}
